# oracle.py
# Trusted reference solvers for small weighted-schedule instances, and
# the max-sum-rate baseline scheduler.
#
# The reference path enumerates every tier-consistent RB assignment and
# optimizes the powers of each assignment as a smooth concave program
# (SLSQP with analytic gradients; with the assignment fixed the problem
# is concave, so a local optimum is global). It shares only the rate
# formulas with the production scheduler — none of its dual-loop,
# scoring, or repair machinery — which makes it a meaningful check.

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .controller import DriftWeights, solve_schedule
from .model import (LN2, ChannelState, ControlDecision, NetworkConfig,
                    instantaneous_ee, power_totals, rate_hue, rate_rue,
                    total_rate)


@dataclass
class TinyInstance:
    """A self-contained weighted-schedule instance, small enough to
    enumerate."""

    cfg: NetworkConfig
    ch: ChannelState
    w: DriftWeights


def random_tiny_instance(rng: np.random.Generator,
                         max_rrh: int = 2, max_ue: int = 2,
                         max_rb_rrh: int = 2,
                         max_rb_hpn: int = 1) -> TinyInstance:
    """Draw a random instance spanning both cap-bound and interior
    regimes (water levels straddle the power caps; weights and power
    prices are occasionally zero)."""
    n = int(rng.integers(1, max_rrh + 1))
    m = int(rng.integers(1, max_ue + 1))
    j = int(rng.integers(1, max_ue + 1))
    k_r = int(rng.integers(1, max_rb_rrh + 1))
    k_h = int(rng.integers(0, max_rb_hpn + 1))
    w0 = 15e3
    cfg = NetworkConfig(
        num_rrh=n, hue_ids=tuple(range(m)), rue_ids=tuple(range(j)),
        rb_rrh=tuple(range(k_r)), rb_hpn=tuple(range(k_h)),
        bandwidth_total=(k_r + k_h) * w0, bandwidth_rb=w0,
        p_max_rrh=float(rng.uniform(0.5, 4.0)),
        p_max_hpn=float(rng.uniform(1.0, 12.0)),
    )
    gains = [10.0 ** rng.uniform(-2.0, 2.5, size=s)
             for s in ((n, j, k_r), (n, m, k_r), (m, k_h))]
    ch = ChannelState(*gains)
    b_hue = 10.0 ** rng.uniform(-4.0, -2.0, size=m)
    b_rue = 10.0 ** rng.uniform(-4.0, -2.0, size=j)
    b_hue[rng.random(m) < 0.1] = 0.0   # an occasional empty backlog
    b_rue[rng.random(j) < 0.1] = 0.0
    y_r = float(10.0 ** rng.uniform(-1.0, 1.0)) if rng.random() < 0.7 \
        else 0.0
    y_h = float(10.0 ** rng.uniform(-1.0, 1.0)) if rng.random() < 0.7 \
        else 0.0
    return TinyInstance(cfg=cfg, ch=ch,
                        w=DriftWeights(b_hue=b_hue, b_rue=b_rue,
                                       y_rrh=y_r, y_hpn=y_h))


def schedule_objective(cfg: NetworkConfig, ch: ChannelState,
                       dec: ControlDecision, w: DriftWeights) -> float:
    """Weighted-schedule cost of a decision: power price minus weighted
    rate (lower is better; the empty decision costs exactly zero)."""
    p_rrh, p_hpn = power_totals(cfg, dec)
    return float(w.y_rrh * p_rrh.sum() + w.y_hpn * p_hpn
                 - np.dot(np.asarray(w.b_hue, float),
                          rate_hue(cfg, ch, dec))
                 - np.dot(np.asarray(w.b_rue, float),
                          rate_rue(cfg, ch, dec)))


# --------------------------------------------------------------------------
# Assignment enumeration
# --------------------------------------------------------------------------

def _assignments(cfg: NetworkConfig):
    """Yield every tier-consistent assignment as (pairs_rrh, pairs_hpn).

    pairs_rrh: list of (is_hue, user, rb); pairs_hpn: list of (hue, rb).
    An RRH-tier RB may idle or serve any one RUE or HUE; an HPN RB may
    idle or serve any one HUE not switched to the RRH tier this slot.
    """
    m, j = cfg.num_hue, cfg.num_rue
    rrh_codes = range(1 + j + m)          # 0 idle, 1..j RUE, j+1.. HUE
    hpn_codes = range(1 + m)              # 0 idle, 1..m HUE
    for rrh in itertools.product(rrh_codes, repeat=cfg.num_rb_rrh):
        switched = {c - 1 - j for c in rrh if c > j}
        pairs_rrh = [(c > j, c - 1 - j if c > j else c - 1, k)
                     for k, c in enumerate(rrh) if c > 0]
        for hpn in itertools.product(hpn_codes, repeat=cfg.num_rb_hpn):
            if any(c > 0 and (c - 1) in switched for c in hpn):
                continue  # an HUE cannot use both tiers in one slot
            pairs_hpn = [(c - 1, l) for l, c in enumerate(hpn) if c > 0]
            yield pairs_rrh, pairs_hpn


def _decision_from_pairs(cfg, pairs_rrh, pairs_hpn, x_rrh, x_hpn
                         ) -> ControlDecision:
    dec = ControlDecision.zeros(cfg)
    for col, (is_hue, u, k) in enumerate(pairs_rrh):
        if is_hue:
            dec.rb_hue_rrh[u, k] = 1.0
            dec.power_rrh_hue[:, u, k] = x_rrh[col]
            dec.assoc[u] = 1.0
        else:
            dec.rb_rue[u, k] = 1.0
            dec.power_rrh_rue[:, u, k] = x_rrh[col]
    for col, (u, l) in enumerate(pairs_hpn):
        dec.rb_hue_hpn[u, l] = 1.0
        dec.power_hpn[u, l] = x_hpn[col]
    return dec


def _pair_arrays(cfg, ch, w, pairs_rrh, pairs_hpn):
    """Gains and weights of the assigned pairs (beff includes the RB
    bandwidth so rates are b * log2-sum directly)."""
    w0 = cfg.bandwidth_rb
    gmat = np.zeros((len(pairs_rrh), cfg.num_rrh))
    beff = np.zeros(len(pairs_rrh))
    for col, (is_hue, u, k) in enumerate(pairs_rrh):
        gmat[col] = (ch.g_rrh_hue[:, u, k] if is_hue
                     else ch.g_rrh_rue[:, u, k])
        beff[col] = (w.b_hue[u] if is_hue else w.b_rue[u]) * w0
    g0 = np.array([ch.g_hpn_hue[u, l] for u, l in pairs_hpn])
    b0 = np.array([w.b_hue[u] for u, l in pairs_hpn]) * w0
    return gmat, beff, g0, b0


def _best_powers_smooth(cfg, w, gmat, beff, g0, b0):
    """Power optimum of one assignment via SLSQP (analytic gradients)."""
    np_r, n = gmat.shape
    np_h = g0.shape[0]
    nv = np_r * n + np_h

    def split(x):
        return x[:np_r * n].reshape(np_r, n), x[np_r * n:]

    def cost(x):
        xr, xh = split(x)
        snr = (xr * gmat).sum(axis=1)
        val = (w.y_rrh * xr.sum() + w.y_hpn * xh.sum()
               - np.dot(beff, np.log2(1.0 + snr))
               - np.dot(b0, np.log2(1.0 + xh * g0)))
        return val

    def grad(x):
        xr, xh = split(x)
        snr = (xr * gmat).sum(axis=1)
        g_r = w.y_rrh - (beff / (1.0 + snr))[:, None] * gmat / LN2
        g_h = w.y_hpn - b0 * g0 / (1.0 + xh * g0) / LN2
        return np.concatenate([g_r.ravel(), g_h])

    cons = []
    for i in range(n):
        jac = np.zeros(nv)
        jac[i:np_r * n:n] = -1.0
        cons.append({"type": "ineq", "jac": lambda x, j=jac: j,
                     "fun": lambda x, i=i: cfg.p_max_rrh
                     - x[:np_r * n].reshape(np_r, n)[:, i].sum()})
    if np_h:
        jac = np.zeros(nv)
        jac[np_r * n:] = -1.0
        cons.append({"type": "ineq", "jac": lambda x, j=jac: j,
                     "fun": lambda x: cfg.p_max_hpn
                     - x[np_r * n:].sum()})
    bounds = ([(0.0, cfg.p_max_rrh)] * (np_r * n)
              + [(0.0, cfg.p_max_hpn)] * np_h)
    starts = []
    for frac in (0.5, 1e-3):
        x0 = np.concatenate([
            np.full(np_r * n, frac * cfg.p_max_rrh / max(np_r, 1)),
            np.full(np_h, frac * cfg.p_max_hpn / max(np_h, 1))])
        starts.append(x0)
    best_x, best_f = np.zeros(nv), cost(np.zeros(nv))
    for x0 in starts:
        res = minimize(cost, x0, jac=grad, method="SLSQP", bounds=bounds,
                       constraints=cons,
                       options={"ftol": 1e-12, "maxiter": 300})
        x = np.clip(res.x, 0.0, None)
        xr, xh = split(x)
        for i in range(n):  # project round-off back inside the caps
            tot = xr[:, i].sum()
            if tot > cfg.p_max_rrh:
                xr[:, i] *= cfg.p_max_rrh / tot
        if np_h and xh.sum() > cfg.p_max_hpn:
            xh *= cfg.p_max_hpn / xh.sum()
        x = np.concatenate([xr.ravel(), xh])
        f = cost(x)
        if f < best_f:
            best_x, best_f = x, f
    return best_x, best_f


def _best_powers_grid(cfg, w, gmat, beff, g0, b0, points):
    """Power optimum of one assignment on a regular grid."""
    np_r, n = gmat.shape
    np_h = g0.shape[0]
    axes = ([np.linspace(0.0, cfg.p_max_rrh, points)] * (np_r * n)
            + [np.linspace(0.0, cfg.p_max_hpn, points)] * np_h)
    if not axes:
        return np.zeros(0), 0.0
    mesh = np.meshgrid(*axes, indexing="ij")
    flat = np.stack([g.ravel() for g in mesh])      # (nv, points^nv)
    xr = flat[:np_r * n].reshape(np_r, n, flat.shape[1])
    xh = flat[np_r * n:]
    ok = np.ones(flat.shape[1], dtype=bool)
    for i in range(n):
        ok &= xr[:, i, :].sum(axis=0) <= cfg.p_max_rrh * (1 + 1e-12)
    if np_h:
        ok &= xh.sum(axis=0) <= cfg.p_max_hpn * (1 + 1e-12)
    snr = np.einsum("pnv,pn->pv", xr, gmat)
    val = (w.y_rrh * xr.sum(axis=(0, 1)) + w.y_hpn * xh.sum(axis=0)
           - np.einsum("p,pv->v", beff, np.log2(1.0 + snr)))
    if np_h:
        val -= np.einsum("p,pv->v", b0, np.log2(1.0 + xh * g0[:, None]))
    val = np.where(ok, val, np.inf)
    best = int(np.argmin(val))
    return flat[:, best], float(val[best])


def enumerate_best_schedule(cfg: NetworkConfig, ch: ChannelState,
                            w: DriftWeights, method: str = "smooth",
                            grid_points: int = 41,
                            budget: float = 1e7):
    """Globally optimize the weighted schedule by brute force.

    Enumerates every tier-consistent assignment; powers per assignment
    come from SLSQP (method="smooth", exact for this concave problem) or
    from exhaustive grid search (method="grid", `grid_points` per power
    axis, refusing to run if the total evaluation count would exceed
    `budget`). Returns (best_cost, best_decision).
    """
    if method not in ("smooth", "grid"):
        raise ValueError(f"unknown method {method!r}")
    combos = list(_assignments(cfg))
    if method == "grid":
        total = 0
        for pairs_rrh, pairs_hpn in combos:
            nv = len(pairs_rrh) * cfg.num_rrh + len(pairs_hpn)
            total += grid_points ** nv
            if total > budget:
                raise ValueError(
                    f"grid search needs more than {budget:g} evaluations; "
                    "shrink the instance or the grid")
    best_cost, best_dec = 0.0, ControlDecision.zeros(cfg)
    for pairs_rrh, pairs_hpn in combos:
        if not pairs_rrh and not pairs_hpn:
            continue  # the empty decision is the 0-cost baseline
        gmat, beff, g0, b0 = _pair_arrays(cfg, ch, w, pairs_rrh, pairs_hpn)
        if method == "smooth":
            x, _ = _best_powers_smooth(cfg, w, gmat, beff, g0, b0)
        else:
            x, _ = _best_powers_grid(cfg, w, gmat, beff, g0, b0,
                                     grid_points)
        nr = len(pairs_rrh) * cfg.num_rrh
        dec = _decision_from_pairs(cfg, pairs_rrh, pairs_hpn,
                                   x[:nr].reshape(-1, cfg.num_rrh),
                                   x[nr:])
        val = schedule_objective(cfg, ch, dec, w)
        if val < best_cost:
            best_cost, best_dec = val, dec
    return best_cost, best_dec


# --------------------------------------------------------------------------
# Max-sum-rate baseline
# --------------------------------------------------------------------------

@dataclass
class MsrResult:
    """One slot of the rate-greedy baseline."""

    decision: ControlDecision
    rho: float        # power price that met the efficiency floor
    ee: float         # achieved instantaneous efficiency (bits/Hz/J)
    flagged: bool     # True when no price reaches the floor
    duals: object     # cap multipliers, for warm starts
    info: object = None  # ScheduleInfo of the accepted solve


def msr_solve(cfg: NetworkConfig, ch: ChannelState,
              ee_required: float = None, duals=None,
              rho_tol: float = 1e-3) -> MsrResult:
    """Max-sum-rate schedule, optionally with an efficiency floor.

    Ignores queues entirely: every UE's rate has weight one. With a
    floor, transmit power is priced at rho (doubling then bisection on
    the smallest rho whose slot efficiency reaches the floor; rho is
    resolved to `rho_tol` relative). Exposes the classic rate/efficiency
    tradeoff the backlog-aware scheduler is compared against.
    """
    target = cfg.ee_required if ee_required is None else ee_required
    ones_h = np.ones(cfg.num_hue)
    ones_j = np.ones(cfg.num_rue)

    def solve(rho):
        w = DriftWeights(b_hue=ones_h, b_rue=ones_j,
                         y_rrh=rho * cfg.drain_eff_rrh,
                         y_hpn=rho * cfg.drain_eff_hpn)
        dec, d_out, info = solve_schedule(cfg, ch, w, duals=duals)
        return dec, d_out, instantaneous_ee(cfg, ch, dec), info

    dec, d_out, ee, info = solve(0.0)
    if target <= 0.0 or ee >= target:
        return MsrResult(dec, 0.0, ee, False, d_out, info)

    # bracket the smallest sufficient price by doubling
    lo, hi = 0.0, cfg.bandwidth_rb * 1e-6
    best = (ee, 0.0, dec, d_out, info)
    found = False
    while hi < cfg.bandwidth_rb * 1e9:
        dec_h, d_h, ee_h, info_h = solve(hi)
        if ee_h > best[0]:
            best = (ee_h, hi, dec_h, d_h, info_h)
        if ee_h >= target:
            found = True
            break
        if total_rate(cfg, ch, dec_h) <= 0.0:
            break  # priced into silence without reaching the floor
        lo = hi
        hi *= 2.0
    if not found:
        ee_b, rho_b, dec_b, d_b, info_b = best
        return MsrResult(dec_b, rho_b, ee_b, True, d_b, info_b)
    while (hi - lo) > rho_tol * hi:
        mid = 0.5 * (lo + hi)
        dec_m, d_m, ee_m, info_m = solve(mid)
        if ee_m >= target:
            hi, dec_h, d_h, ee_h, info_h = mid, dec_m, d_m, ee_m, info_m
        else:
            lo = mid
    return MsrResult(dec_h, hi, ee_h, False, d_h, info_h)
