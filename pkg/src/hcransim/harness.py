# harness.py
# The slotted simulation loop: drive the per-slot scheduler (or the
# rate-greedy baseline) over random placement, fading and arrivals,
# accumulate long-run metrics, check the analytic queue ceiling online,
# and sweep one control knob at a time.
#
# Step order inside one slot is fixed: observe queues -> draw channel and
# arrivals -> solve the slot (auxiliary targets, admission, schedule) ->
# evaluate rates and powers -> record -> update queues last. Averages are
# plain means over the slots after `warmup` (default 0).

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .controller import solve_slot
from .model import NetworkConfig, rate_hue, rate_rue, total_power_drain
from .oracle import msr_solve
from .queues import (QueueState, update_traffic_queues, update_virtual_h,
                     update_virtual_z)
from .stochastic import (ArrivalSpec, ChannelSpec, draw_arrivals,
                         draw_channel, draw_placement, mean_gains,
                         spawn_streams)

ALGORITHMS = ("jccro", "msr")
SWEEP_AXES = ("V", "lambda", "ee_req")
NONCONV_FLAG_FRACTION = 0.05  # flag a run when more slots fail to converge

# Columns of the per-slot trace (beyond the per-queue matrices); kept in
# one place so the CSV writer and the tests agree on the schema.
TRACE_SCALARS = ("z", "mu_sum", "p_drain", "ee_slot", "arrive_sum",
                 "admit_hue_sum", "admit_rue_sum", "served_sum",
                 "dual_iters", "converged", "msr_flag")


def queue_bounds(cfg: NetworkConfig):
    """Analytic per-queue ceilings (HUE, RUE): V*price*slope + 2*A_max.

    `slope` is the largest right-derivative of the per-UE utility (1 for
    linear utility). Admission stops whenever the backlog exceeds the
    marginal utility of admitting, so a traffic queue can never climb
    more than two arrival bursts past that point.
    """
    return (cfg.control_v * cfg.price_hue * cfg.phi_h + 2.0 * cfg.a_max_hue,
            cfg.control_v * cfg.price_rue * cfg.phi_r + 2.0 * cfg.a_max_rue)


@dataclass
class RunMetrics:
    """Long-run averages and health flags of one simulated run.

    Rates are bits/s, queue figures bits, throughput bits/slot, delay in
    slots (Little's law: mean total backlog over mean admitted bits per
    slot). `achieved_ee` is the ratio of time averages, mean rate over
    band times mean drain power; `ee_slot_mean` averages the per-slot
    ratios instead and is reported for comparison only.
    """

    algorithm: str
    slots: int
    warmup: int
    seed: int
    sweep_axis: str = None       # set by sweep()
    sweep_value: float = float("nan")
    r_hue: np.ndarray = None     # (M,) mean admitted bits/slot per HUE
    r_rue: np.ndarray = None     # (J,)
    utility: float = 0.0         # U of the mean admitted rates
    avg_delay: float = 0.0       # slots
    avg_rate: float = 0.0        # bits/s scheduled
    avg_power: float = 0.0       # W, drain-weighted transmit + static
    achieved_ee: float = 0.0     # bits/Hz/J, ratio of averages
    ee_slot_mean: float = 0.0    # bits/Hz/J, average of ratios
    avg_goodput: float = 0.0     # bits/slot drained from the queues
    offered_load: float = 0.0    # bits/slot offered (realized mean)
    avg_queue_bits: float = 0.0  # time-average total traffic backlog
    bound_slack_q: float = 0.0   # min over slots of (queue ceiling - Q)
    drift_const_c: float = 0.0   # empirical drift-constant upper estimate
    nonconv_fraction: float = 0.0
    flag_fraction: float = 0.0   # slots where the EE floor was unreachable
    flagged: bool = False
    trace: dict = field(default=None, repr=False)

    def scalar_fields(self) -> dict:
        """Summary-row view: every scalar plus per-class throughput sums."""
        out = {"algorithm": self.algorithm, "slots": self.slots,
               "warmup": self.warmup, "seed": self.seed,
               "sweep_axis": self.sweep_axis or "",
               "sweep_value": self.sweep_value,
               "throughput_hue": float(np.sum(self.r_hue)),
               "throughput_rue": float(np.sum(self.r_rue))}
        for name in ("utility", "avg_delay", "avg_rate", "avg_power",
                     "achieved_ee", "ee_slot_mean", "avg_goodput",
                     "offered_load", "avg_queue_bits", "bound_slack_q",
                     "drift_const_c", "nonconv_fraction", "flag_fraction"):
            out[name] = getattr(self, name)
        out["flagged"] = int(self.flagged)
        return out


def run(cfg: NetworkConfig, arrivals: ArrivalSpec = None,
        channel: ChannelSpec = None, slots: int = 5000, seed: int = 0,
        algorithm: str = "jccro", warmup: int = 0,
        warm_start: bool = True, keep_trace: bool = True) -> RunMetrics:
    """Simulate one run and return its metrics (trace attached).

    One placement is drawn per run; fading and arrivals are fresh every
    slot, from generator streams spawned independently off `seed` (the
    fading a slot sees does not depend on the arrival settings, so runs
    at different loads are paired). `warm_start` carries the schedule
    cap multipliers from slot to slot; disabling it changes nothing but
    speed. The rate-greedy baseline (`algorithm="msr"`) ignores queues
    and admits every arrival; its EE floor is enforced per slot by a
    power price instead of the efficiency queue.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}, "
                         f"got {algorithm!r}")
    if slots < 1:
        raise ValueError("slots must be >= 1")
    if not 0 <= warmup < slots:
        raise ValueError("warmup must lie in [0, slots)")
    if arrivals is None:
        arrivals = ArrivalSpec.from_config(cfg)
    if channel is None:
        channel = ChannelSpec()

    rng_place, rng_arr, rng_ch = spawn_streams(seed)
    placement = draw_placement(cfg, channel, rng_place)
    gains0 = mean_gains(cfg, channel, placement)

    m, j = cfg.num_hue, cfg.num_rue
    tau, w_band = cfg.slot_duration, cfg.bandwidth_total
    bound_h, bound_r = queue_bounds(cfg)
    qs = QueueState.zeros(cfg)
    duals = None

    tr = None
    if keep_trace:
        tr = {"q_hue": np.zeros((slots, m)), "q_rue": np.zeros((slots, j))}
        tr.update({name: np.zeros(slots) for name in TRACE_SCALARS})

    # accumulators over the measured window [warmup, slots)
    adm_h_acc = np.zeros(m)
    adm_r_acc = np.zeros(j)
    acc = {name: 0.0 for name in
           ("q_sum", "mu_sum", "p_drain", "ee_slot", "arrive", "admit",
            "served", "nonconv", "msr_flag")}
    n_meas = slots - warmup
    bound_slack = min(bound_h, bound_r)  # zero queues start with full slack
    drift_c = 0.0

    for t in range(slots):
        ch_t = draw_channel(cfg, gains0, rng_ch)
        a_hue, a_rue = draw_arrivals(cfg, arrivals, rng_arr, t)

        if algorithm == "jccro":
            dec, duals_out, info = solve_slot(cfg, ch_t, qs, a_hue, a_rue,
                                              duals=duals)
            admit_h, admit_r = dec.admit_hue, dec.admit_rue
            aux_h, aux_r = dec.aux_hue, dec.aux_rue
            slot_flag = False
        else:
            res = msr_solve(cfg, ch_t, duals=duals)
            dec, duals_out, info = res.decision, res.duals, res.info
            admit_h, admit_r = a_hue, a_rue  # full buffer: admit everything
            aux_h, aux_r = np.zeros(m), np.zeros(j)
            slot_flag = res.flagged

        mu_h = rate_hue(cfg, ch_t, dec)
        mu_r = rate_rue(cfg, ch_t, dec)
        serv_h, serv_r = mu_h * tau, mu_r * tau
        mu_sum = float(mu_h.sum() + mu_r.sum())
        p_drain = total_power_drain(cfg, dec)
        ee_slot = mu_sum / (w_band * p_drain) if p_drain > 0 else 0.0
        served = float(np.minimum(qs.q_hue, serv_h).sum()
                       + np.minimum(qs.q_rue, serv_r).sum())
        q_sum = float(qs.q_hue.sum() + qs.q_rue.sum())
        arrive = float(a_hue.sum() + a_rue.sum())
        admit = float(admit_h.sum() + admit_r.sum())

        if keep_trace:
            tr["q_hue"][t] = qs.q_hue
            tr["q_rue"][t] = qs.q_rue
            tr["z"][t] = qs.z_ee
            tr["mu_sum"][t] = mu_sum
            tr["p_drain"][t] = p_drain
            tr["ee_slot"][t] = ee_slot
            tr["arrive_sum"][t] = arrive
            tr["admit_hue_sum"][t] = float(admit_h.sum())
            tr["admit_rue_sum"][t] = float(admit_r.sum())
            tr["served_sum"][t] = served
            tr["dual_iters"][t] = info.iterations
            tr["converged"][t] = float(info.converged)
            tr["msr_flag"][t] = float(slot_flag)

        if t >= warmup:
            adm_h_acc += admit_h
            adm_r_acc += admit_r
            acc["q_sum"] += q_sum
            acc["mu_sum"] += mu_sum
            acc["p_drain"] += p_drain
            acc["ee_slot"] += ee_slot
            acc["arrive"] += arrive
            acc["admit"] += admit
            acc["served"] += served
            acc["nonconv"] += float(not info.converged)
            acc["msr_flag"] += float(slot_flag)
            # one-slot Lyapunov drift constant: half the sum of squared
            # queue inputs and outputs, maximized over the run
            c_t = 0.5 * (float(np.dot(serv_h, serv_h) + np.dot(serv_r, serv_r))
                         + 2.0 * float(np.dot(admit_h, admit_h)
                                       + np.dot(admit_r, admit_r))
                         + float(np.dot(aux_h, aux_h) + np.dot(aux_r, aux_r))
                         + mu_sum ** 2
                         + (w_band * cfg.ee_required * p_drain) ** 2)
            drift_c = max(drift_c, c_t)

        # queue updates come last; the next slot observes the result
        qs.q_hue = update_traffic_queues(qs.q_hue, serv_h, admit_h)
        qs.q_rue = update_traffic_queues(qs.q_rue, serv_r, admit_r)
        if algorithm == "jccro":
            qs.h_hue = update_virtual_h(qs.h_hue, admit_h, aux_h)
            qs.h_rue = update_virtual_h(qs.h_rue, admit_r, aux_r)
            qs.z_ee = update_virtual_z(qs.z_ee, mu_sum, p_drain, cfg)

        slack = min(bound_h - float(qs.q_hue.max()),
                    bound_r - float(qs.q_rue.max()))
        bound_slack = min(bound_slack, slack)
        if warm_start:
            duals = duals_out

    r_hue = adm_h_acc / n_meas
    r_rue = adm_r_acc / n_meas
    mean_p = acc["p_drain"] / n_meas
    mean_mu = acc["mu_sum"] / n_meas
    mean_admit = acc["admit"] / n_meas
    nonconv = acc["nonconv"] / n_meas
    flag_frac = acc["msr_flag"] / n_meas
    return RunMetrics(
        algorithm=algorithm, slots=slots, warmup=warmup, seed=seed,
        r_hue=r_hue, r_rue=r_rue,
        utility=cfg.utility_of_rates(r_hue, r_rue),
        avg_delay=(acc["q_sum"] / n_meas / mean_admit
                   if mean_admit > 0 else 0.0),
        avg_rate=mean_mu,
        avg_power=mean_p,
        achieved_ee=mean_mu / (w_band * mean_p) if mean_p > 0 else 0.0,
        ee_slot_mean=acc["ee_slot"] / n_meas,
        avg_goodput=acc["served"] / n_meas,
        offered_load=acc["arrive"] / n_meas,
        avg_queue_bits=acc["q_sum"] / n_meas,
        bound_slack_q=bound_slack,
        drift_const_c=drift_c,
        nonconv_fraction=nonconv,
        flag_fraction=flag_frac,
        flagged=(nonconv > NONCONV_FLAG_FRACTION
                 or flag_frac > NONCONV_FLAG_FRACTION),
        trace=tr,
    )


def _sweep_point(cfg: NetworkConfig, arrivals: ArrivalSpec, axis: str,
                 value: float):
    """Config and arrival spec of one sweep point."""
    v = float(value)
    if axis == "V":
        return replace(cfg, control_v=v), arrivals
    if axis == "ee_req":
        return replace(cfg, ee_required=v), arrivals
    # "lambda": scale both means, preserving the HUE/RUE load ratio
    ratio = (arrivals.mean_hue / arrivals.mean_rue
             if arrivals.mean_rue > 0 else 0.5)
    return cfg, replace(arrivals, mean_rue=v, mean_hue=v * ratio)


def _run_sweep_job(job):
    (cfg, arrivals, channel, slots, seed, algorithm, warmup, warm_start,
     keep_trace, axis, value) = job
    mets = run(cfg, arrivals, channel, slots=slots, seed=seed,
               algorithm=algorithm, warmup=warmup, warm_start=warm_start,
               keep_trace=keep_trace)
    mets.sweep_axis, mets.sweep_value = axis, float(value)
    return mets


def sweep(cfg: NetworkConfig, axis: str, values,
          arrivals: ArrivalSpec = None, channel: ChannelSpec = None,
          slots: int = 5000, seed: int = 0, algorithm: str = "jccro",
          warmup: int = 0, warm_start: bool = True,
          keep_trace: bool = True, n_jobs: int = 1) -> list:
    """One run per value of `axis` ("V", "lambda" or "ee_req").

    Every point uses the same seed, so all runs share the placement, the
    fading sample path and (for non-lambda axes) the arrival sample path
    — differences between points are differences of policy, not of luck.
    `n_jobs` > 1 runs points in separate processes; the result order
    always follows `values`.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    if arrivals is None:
        arrivals = ArrivalSpec.from_config(cfg)
    jobs = []
    for v in values:
        cfg_v, arr_v = _sweep_point(cfg, arrivals, axis, v)
        jobs.append((cfg_v, arr_v, channel, slots, seed, algorithm,
                     warmup, warm_start, keep_trace, axis, v))
    if n_jobs <= 1 or len(jobs) == 1:
        return [_run_sweep_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(n_jobs, len(jobs))) as pool:
        return list(pool.map(_run_sweep_job, jobs))
