# model.py
# Static description of the two-tier downlink network and the per-slot
# physical-layer arithmetic (rates, powers, energy efficiency).
#
# Topology: one high-power node (HPN) at the cell center plus `num_rrh`
# remote radio heads (RRHs). Two disjoint user populations share the cell:
#  - RUEs are served only by the RRH tier (all RRHs may combine signal
#    power onto an RUE on the same resource block),
#  - HUEs are nominally served by the HPN on its own RB set, but the
#    scheduler may switch an HUE to the RRH tier for a slot (assoc flag).
# The two tiers own disjoint RB sets; within a tier an RB is used by at
# most one UE per slot (no intra-tier reuse).

from dataclasses import dataclass, field

import numpy as np

LN2 = float(np.log(2.0))

# Utility kinds accepted by NetworkConfig.utility_kind.
UTILITY_KINDS = ("linear", "log")


@dataclass
class NetworkConfig:
    """Static network + control parameters for one experiment.

    Power model: each RRH spends `drain_eff_rrh * (transmit power)` plus a
    tier-aggregate static term `static_power_rrh`; same for the HPN. The
    energy-efficiency requirement `ee_required` is in bits/Hz/J and is
    enforced on the ratio of time averages (total rate over total weighted
    power), not per slot.
    """

    num_rrh: int = 4                    # RRHs in the cell
    hue_ids: tuple = tuple(range(12))   # HUE identifiers (HPN-tier users)
    rue_ids: tuple = tuple(range(10))   # RUE identifiers (RRH-tier users)
    rb_rrh: tuple = tuple(range(12))    # RB ids owned by the RRH tier
    rb_hpn: tuple = tuple(range(8))     # RB ids owned by the HPN tier
    bandwidth_total: float = 300e3      # Hz, whole system band
    bandwidth_rb: float = 15e3          # Hz per RB
    slot_duration: float = 0.01         # s per slot
    p_max_rrh: float = 3.0              # W, per-RRH transmit cap
    p_max_hpn: float = 10.0             # W, HPN transmit cap
    drain_eff_rrh: float = 1.0          # drain slope of RRH transmit power
    drain_eff_hpn: float = 1.0          # drain slope of HPN transmit power
    static_power_rrh: float = 1.0       # W, aggregate static draw, RRH tier
    static_power_hpn: float = 2.0       # W, static draw of the HPN
    ee_required: float = 0.0            # bits/Hz/J, long-run EE floor
    control_v: float = 1000.0           # utility weight V of the controller
    price_rue: float = 1.0              # utility price per RUE
    price_hue: float = 1.0              # utility price per HUE
    utility_kind: str = "linear"        # "linear" or "log"
    a_max_hue: float = 15000.0          # bits/slot, per-HUE arrival cap
    a_max_rue: float = 30000.0          # bits/slot, per-RUE arrival cap
    util_scale_bits: float = 1000.0     # r0 of log utility: g(r)=ln(1+r/r0)
    phi_r: float = field(default=None)  # max right-derivative of RUE utility
    phi_h: float = field(default=None)  # max right-derivative of HUE utility
    aux_mode: str = "auto"              # "auto" | "virtual" | "direct"

    def __post_init__(self):
        self.hue_ids = tuple(self.hue_ids)
        self.rue_ids = tuple(self.rue_ids)
        self.rb_rrh = tuple(self.rb_rrh)
        self.rb_hpn = tuple(self.rb_hpn)
        if self.utility_kind not in UTILITY_KINDS:
            raise ValueError(f"utility_kind must be one of {UTILITY_KINDS}, "
                             f"got {self.utility_kind!r}")
        if self.aux_mode not in ("auto", "virtual", "direct"):
            raise ValueError(f"aux_mode must be auto/virtual/direct, "
                             f"got {self.aux_mode!r}")
        if self.num_rrh < 1:
            raise ValueError("num_rrh must be >= 1")
        if not self.hue_ids or not self.rue_ids:
            raise ValueError("need at least one HUE and one RUE")
        if not self.rb_rrh:
            raise ValueError("RRH tier needs at least one RB")
        for name in ("bandwidth_total", "bandwidth_rb", "slot_duration",
                     "p_max_rrh", "p_max_hpn", "control_v",
                     "a_max_hue", "a_max_rue", "util_scale_bits"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("drain_eff_rrh", "drain_eff_hpn", "static_power_rrh",
                     "static_power_hpn", "ee_required",
                     "price_rue", "price_hue"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        # The tier RB sets partition the system band.
        nb = (len(self.rb_rrh) + len(self.rb_hpn)) * self.bandwidth_rb
        if abs(nb - self.bandwidth_total) > 1e-6 * self.bandwidth_total:
            raise ValueError(
                "RB sets do not partition the band: "
                f"({len(self.rb_rrh)}+{len(self.rb_hpn)}) RBs x "
                f"{self.bandwidth_rb} Hz != {self.bandwidth_total} Hz")
        # Default marginal-utility slopes at zero rate, used by the queue
        # bound: 1 for linear utility, 1/r0 for the saturating log utility.
        if self.phi_r is None:
            self.phi_r = 1.0 if self.utility_kind == "linear" \
                else 1.0 / self.util_scale_bits
        if self.phi_h is None:
            self.phi_h = 1.0 if self.utility_kind == "linear" \
                else 1.0 / self.util_scale_bits

    # -- convenience counts ------------------------------------------------
    @property
    def num_hue(self) -> int:
        return len(self.hue_ids)

    @property
    def num_rue(self) -> int:
        return len(self.rue_ids)

    @property
    def num_rb_rrh(self) -> int:
        return len(self.rb_rrh)

    @property
    def num_rb_hpn(self) -> int:
        return len(self.rb_hpn)

    def effective_aux_mode(self) -> str:
        """Resolve aux_mode: linear utility admits directly on the traffic
        queue; log utility needs the auxiliary/virtual-queue machinery."""
        if self.aux_mode != "auto":
            return self.aux_mode
        return "direct" if self.utility_kind == "linear" else "virtual"

    def utility_of_rates(self, r_hue, r_rue) -> float:
        """Aggregate utility of per-UE average admitted rates (bits/slot)."""
        r_hue = np.asarray(r_hue, dtype=float)
        r_rue = np.asarray(r_rue, dtype=float)
        if self.utility_kind == "linear":
            return float(self.price_hue * r_hue.sum()
                         + self.price_rue * r_rue.sum())
        r0 = self.util_scale_bits
        return float(self.price_hue * np.log1p(r_hue / r0).sum()
                     + self.price_rue * np.log1p(r_rue / r0).sum())


@dataclass
class ChannelState:
    """Per-slot normalized channel power gains (noise folded in).

    A transmit power p on a link with gain g yields SNR p*g directly.
    Shapes: g_rrh_rue (num_rrh, num_rue, num_rb_rrh),
            g_rrh_hue (num_rrh, num_hue, num_rb_rrh),
            g_hpn_hue (num_hue, num_rb_hpn).
    """

    g_rrh_rue: np.ndarray
    g_rrh_hue: np.ndarray
    g_hpn_hue: np.ndarray

    def __post_init__(self):
        self.g_rrh_rue = np.asarray(self.g_rrh_rue, dtype=float)
        self.g_rrh_hue = np.asarray(self.g_rrh_hue, dtype=float)
        self.g_hpn_hue = np.asarray(self.g_hpn_hue, dtype=float)
        for name in ("g_rrh_rue", "g_rrh_hue", "g_hpn_hue"):
            g = getattr(self, name)
            if not np.all(np.isfinite(g)) or np.any(g < 0):
                raise ValueError(f"{name} must be finite and nonnegative")

    def check_shapes(self, cfg: NetworkConfig) -> None:
        n, m, j = cfg.num_rrh, cfg.num_hue, cfg.num_rue
        kr, kh = cfg.num_rb_rrh, cfg.num_rb_hpn
        expect = {"g_rrh_rue": (n, j, kr),
                  "g_rrh_hue": (n, m, kr),
                  "g_hpn_hue": (m, kh)}
        for name, shape in expect.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ValueError(f"{name} has shape {got}, expected {shape}")


@dataclass
class ControlDecision:
    """Everything the scheduler decides for one slot.

    Binary allocation arrays use float 0/1. Power arrays are zero wherever
    the matching RB is not assigned. `assoc[m]` is 1 when HUE m is served by
    the RRH tier this slot (then it may not use any HPN RB, and vice versa).
    """

    admit_hue: np.ndarray      # (M,) bits admitted per HUE
    admit_rue: np.ndarray      # (J,) bits admitted per RUE
    aux_hue: np.ndarray        # (M,) auxiliary throughput targets, bits
    aux_rue: np.ndarray        # (J,)
    assoc: np.ndarray          # (M,) 0/1: HUE served by RRH tier this slot
    rb_rue: np.ndarray         # (J, K_R) 0/1 RB-to-RUE assignment
    rb_hue_rrh: np.ndarray     # (M, K_R) 0/1 RRH-tier RB to HUE
    rb_hue_hpn: np.ndarray     # (M, K_H) 0/1 HPN RB to HUE
    power_rrh_rue: np.ndarray  # (N, J, K_R) W per (RRH, RUE, RB)
    power_rrh_hue: np.ndarray  # (N, M, K_R) W per (RRH, HUE, RB)
    power_hpn: np.ndarray      # (M, K_H) W per (HUE, HPN RB)

    @classmethod
    def zeros(cls, cfg: NetworkConfig) -> "ControlDecision":
        n, m, j = cfg.num_rrh, cfg.num_hue, cfg.num_rue
        kr, kh = cfg.num_rb_rrh, cfg.num_rb_hpn
        return cls(
            admit_hue=np.zeros(m), admit_rue=np.zeros(j),
            aux_hue=np.zeros(m), aux_rue=np.zeros(j),
            assoc=np.zeros(m),
            rb_rue=np.zeros((j, kr)), rb_hue_rrh=np.zeros((m, kr)),
            rb_hue_hpn=np.zeros((m, kh)),
            power_rrh_rue=np.zeros((n, j, kr)),
            power_rrh_hue=np.zeros((n, m, kr)),
            power_hpn=np.zeros((m, kh)),
        )

    def validate(self, cfg: NetworkConfig, tol: float = 1e-9) -> None:
        """Raise ValueError on any structural constraint violation.

        Checks: 0/1 allocation entries; at most one user per RB in each
        tier; powers nonnegative and only on assigned RBs; tier exclusivity
        of each HUE consistent with `assoc`; per-node power caps.
        """
        for name in ("rb_rue", "rb_hue_rrh", "rb_hue_hpn", "assoc"):
            a = getattr(self, name)
            if not np.all((a == 0.0) | (a == 1.0)):
                raise ValueError(f"{name} must be 0/1")
        # no intra-tier RB reuse
        rrh_load = self.rb_rue.sum(axis=0) + self.rb_hue_rrh.sum(axis=0)
        if np.any(rrh_load > 1.0 + tol):
            raise ValueError("an RRH-tier RB is assigned to several users")
        if np.any(self.rb_hue_hpn.sum(axis=0) > 1.0 + tol):
            raise ValueError("an HPN RB is assigned to several HUEs")
        for name in ("power_rrh_rue", "power_rrh_hue", "power_hpn"):
            p = getattr(self, name)
            if np.any(p < -tol) or not np.all(np.isfinite(p)):
                raise ValueError(f"{name} must be finite and nonnegative")
        if np.any((self.power_rrh_rue.sum(axis=0) > tol)
                  & (self.rb_rue == 0.0)):
            raise ValueError("RUE power on an unassigned RB")
        if np.any((self.power_rrh_hue.sum(axis=0) > tol)
                  & (self.rb_hue_rrh == 0.0)):
            raise ValueError("HUE RRH-tier power on an unassigned RB")
        if np.any((self.power_hpn > tol) & (self.rb_hue_hpn == 0.0)):
            raise ValueError("HPN power on an unassigned RB")
        # tier exclusivity per HUE
        on_rrh = self.rb_hue_rrh.sum(axis=1) > 0
        on_hpn = self.rb_hue_hpn.sum(axis=1) > 0
        if np.any(on_rrh & on_hpn):
            raise ValueError("an HUE uses both tiers in one slot")
        if np.any(on_rrh & (self.assoc == 0.0)):
            raise ValueError("assoc=0 but HUE holds RRH-tier RBs")
        if np.any(on_hpn & (self.assoc == 1.0)):
            raise ValueError("assoc=1 but HUE holds HPN RBs")
        # per-node caps
        p_rrh, p_hpn = power_totals(cfg, self)
        if np.any(p_rrh > cfg.p_max_rrh * (1 + 1e-6) + tol):
            raise ValueError("per-RRH transmit power exceeds cap")
        if p_hpn > cfg.p_max_hpn * (1 + 1e-6) + tol:
            raise ValueError("HPN transmit power exceeds cap")


# --------------------------------------------------------------------------
# Per-slot physical-layer evaluation
# --------------------------------------------------------------------------

def rate_rue(cfg: NetworkConfig, ch: ChannelState,
             dec: ControlDecision) -> np.ndarray:
    """Per-RUE downlink rate in bits/s.

    On each assigned RB the RUE collects transmit power from every RRH
    (coherent combining), so the SNR is the gain-weighted power sum.
    """
    snr = np.einsum("njk,njk->jk", dec.power_rrh_rue, ch.g_rrh_rue)
    per_rb = dec.rb_rue * np.log2(1.0 + snr)
    return cfg.bandwidth_rb * per_rb.sum(axis=1)


def rate_hue(cfg: NetworkConfig, ch: ChannelState,
             dec: ControlDecision) -> np.ndarray:
    """Per-HUE downlink rate in bits/s, honoring the tier switch."""
    snr_r = np.einsum("nmk,nmk->mk", dec.power_rrh_hue, ch.g_rrh_hue)
    rrh_part = (dec.rb_hue_rrh * np.log2(1.0 + snr_r)).sum(axis=1)
    hpn_part = (dec.rb_hue_hpn
                * np.log2(1.0 + dec.power_hpn * ch.g_hpn_hue)).sum(axis=1)
    s = dec.assoc
    return cfg.bandwidth_rb * (s * rrh_part + (1.0 - s) * hpn_part)


def power_totals(cfg: NetworkConfig, dec: ControlDecision):
    """Transmit power actually radiated: per-RRH vector and HPN scalar."""
    p_rrh = (dec.power_rrh_rue.sum(axis=(1, 2))
             + dec.power_rrh_hue.sum(axis=(1, 2)))
    p_hpn = float(dec.power_hpn.sum())
    return p_rrh, p_hpn


def total_power_drain(cfg: NetworkConfig, dec: ControlDecision) -> float:
    """System power draw in W: drain-weighted transmit power + static."""
    p_rrh, p_hpn = power_totals(cfg, dec)
    return float(cfg.drain_eff_rrh * p_rrh.sum() + cfg.static_power_rrh
                 + cfg.drain_eff_hpn * p_hpn + cfg.static_power_hpn)


def total_rate(cfg: NetworkConfig, ch: ChannelState,
               dec: ControlDecision) -> float:
    """Sum downlink rate over all UEs, bits/s."""
    return float(rate_hue(cfg, ch, dec).sum() + rate_rue(cfg, ch, dec).sum())


def instantaneous_ee(cfg: NetworkConfig, ch: ChannelState,
                     dec: ControlDecision) -> float:
    """One-slot energy efficiency in bits/Hz/J (rate over band x drain)."""
    return total_rate(cfg, ch, dec) / (cfg.bandwidth_total
                                       * total_power_drain(cfg, dec))
