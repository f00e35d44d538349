# stochastic.py
# Random inputs of the simulation: node placement, per-slot traffic
# arrivals, and per-slot fading channel gains.
#
# Determinism contract: every draw goes through an explicitly passed
# numpy Generator, and the harness derives independent child streams for
# placement / arrivals / channel from one root seed. Identical seeds give
# bit-identical sample paths, and the channel stream does not depend on
# the arrival configuration (so runs at different loads see the same
# fading when seeded alike).

from dataclasses import dataclass

import numpy as np

from .model import ChannelState, NetworkConfig

ARRIVAL_KINDS = ("poisson", "bernoulli", "timevarying")


@dataclass
class ArrivalSpec:
    """Per-slot traffic generator description (bits per slot per UE).

    kinds:
      poisson     — A ~ Poisson(mean), truncated at the cap
      bernoulli   — A = cap with probability mean/cap, else 0
      timevarying — Poisson with slot-dependent mean
                    mean*(1 + depth*sin(2*pi*t/period)); ergodic with
                    long-run average `mean`
    """

    kind: str = "poisson"
    mean_rue: float = 6000.0   # bits/slot per RUE
    mean_hue: float = 3000.0   # bits/slot per HUE
    cap_rue: float = 30000.0   # truncation cap per RUE
    cap_hue: float = 15000.0   # truncation cap per HUE
    period: float = 1000.0     # slots, for the timevarying kind
    depth: float = 0.5         # modulation depth, for the timevarying kind

    def __post_init__(self):
        if self.kind not in ARRIVAL_KINDS:
            raise ValueError(f"kind must be one of {ARRIVAL_KINDS}, "
                             f"got {self.kind!r}")
        for name in ("cap_rue", "cap_hue", "period"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.mean_rue < 0 or self.mean_hue < 0:
            raise ValueError("mean arrivals must be nonnegative")
        if self.mean_rue > self.cap_rue or self.mean_hue > self.cap_hue:
            raise ValueError("mean arrivals exceed the truncation cap")
        if not 0.0 <= self.depth <= 1.0:
            raise ValueError("depth must lie in [0, 1]")

    @classmethod
    def from_config(cls, cfg: NetworkConfig, kind: str = "poisson",
                    mean_rue: float = 6000.0,
                    mean_hue: float = None) -> "ArrivalSpec":
        """Build a spec whose caps match the admission caps of `cfg`."""
        if mean_hue is None:
            mean_hue = 0.5 * mean_rue
        return cls(kind=kind, mean_rue=mean_rue, mean_hue=mean_hue,
                   cap_rue=cfg.a_max_rue, cap_hue=cfg.a_max_hue)


@dataclass
class ChannelSpec:
    """Geometry and propagation description.

    Distance-based losses follow intercept + slope*log10(d meters) in dB;
    small-scale fading is unit-mean Rayleigh power, i.i.d. across links,
    RBs and slots. All gains are normalized by the per-RB noise power, so
    SNR = power * gain.
    """

    disc_radius_m: float = 500.0    # cell radius, HPN at the center
    min_dist_m: float = 10.0        # keep UEs off transmitter near fields
    pl_intercept_rrh: float = 31.5  # dB at 1 m, RRH links
    pl_slope_rrh: float = 40.0      # dB per decade of distance, RRH links
    pl_intercept_hpn: float = 31.5  # dB at 1 m, HPN links
    pl_slope_hpn: float = 35.0      # dB per decade of distance, HPN links
    noise_dbm: float = -102.0       # per-RB noise power

    def __post_init__(self):
        if self.disc_radius_m <= 0 or self.min_dist_m < 0:
            raise ValueError("bad geometry radii")
        if self.min_dist_m >= self.disc_radius_m:
            raise ValueError("min_dist_m must be below disc_radius_m")

    @property
    def noise_watts(self) -> float:
        return 10.0 ** ((self.noise_dbm - 30.0) / 10.0)


@dataclass
class Placement:
    """Planar node positions in meters; the HPN sits at the origin."""

    rrh_xy: np.ndarray  # (N, 2)
    hue_xy: np.ndarray  # (M, 2)
    rue_xy: np.ndarray  # (J, 2)


def _uniform_disc(rng: np.random.Generator, n: int, radius: float,
                  r_min: float) -> np.ndarray:
    """Uniform points on the annulus r_min <= r <= radius."""
    u = rng.uniform(r_min ** 2, radius ** 2, size=n)
    r = np.sqrt(u)
    ang = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.column_stack((r * np.cos(ang), r * np.sin(ang)))


def draw_placement(cfg: NetworkConfig, spec: ChannelSpec,
                   rng: np.random.Generator) -> Placement:
    """Scatter RRHs and UEs uniformly over the cell disc.

    Points are kept `min_dist_m` away from the HPN by sampling on an
    annulus; UEs ending up within `min_dist_m` of some RRH are resampled.
    """
    rrh = _uniform_disc(rng, cfg.num_rrh, spec.disc_radius_m, spec.min_dist_m)

    def _ue_points(count: int) -> np.ndarray:
        pts = _uniform_disc(rng, count, spec.disc_radius_m, spec.min_dist_m)
        for _ in range(100):
            d = np.linalg.norm(pts[:, None, :] - rrh[None, :, :], axis=2)
            bad = (d < spec.min_dist_m).any(axis=1)
            if not bad.any():
                break
            pts[bad] = _uniform_disc(rng, int(bad.sum()),
                                     spec.disc_radius_m, spec.min_dist_m)
        return pts

    return Placement(rrh_xy=rrh, hue_xy=_ue_points(cfg.num_hue),
                     rue_xy=_ue_points(cfg.num_rue))


def pathloss_db(spec: ChannelSpec, dist_m, tier: str):
    """Distance loss in dB for a link of the given tier ('rrh'/'hpn')."""
    d = np.maximum(np.asarray(dist_m, dtype=float), 1.0)
    if tier == "rrh":
        return spec.pl_intercept_rrh + spec.pl_slope_rrh * np.log10(d)
    if tier == "hpn":
        return spec.pl_intercept_hpn + spec.pl_slope_hpn * np.log10(d)
    raise ValueError(f"unknown tier {tier!r}")


def mean_gains(cfg: NetworkConfig, spec: ChannelSpec, placement: Placement):
    """Noise-normalized mean link gains from the placement.

    Returns (g0_rrh_rue (N,J), g0_rrh_hue (N,M), g0_hpn_hue (M,)); the
    per-slot channel is each mean gain times a unit-mean fading draw.
    """
    def _dist(tx: np.ndarray, rx: np.ndarray) -> np.ndarray:
        return np.linalg.norm(tx[:, None, :] - rx[None, :, :], axis=2)

    noise = spec.noise_watts
    d_rj = _dist(placement.rrh_xy, placement.rue_xy)
    d_rm = _dist(placement.rrh_xy, placement.hue_xy)
    d_hm = np.linalg.norm(placement.hue_xy, axis=1)
    g_rj = 10.0 ** (-pathloss_db(spec, d_rj, "rrh") / 10.0) / noise
    g_rm = 10.0 ** (-pathloss_db(spec, d_rm, "rrh") / 10.0) / noise
    g_hm = 10.0 ** (-pathloss_db(spec, d_hm, "hpn") / 10.0) / noise
    return g_rj, g_rm, g_hm


def draw_channel(cfg: NetworkConfig, gains0, rng: np.random.Generator
                 ) -> ChannelState:
    """One slot of channel state: mean gains times Rayleigh power fading.

    `gains0` is the triple returned by mean_gains(). Fading is Exp(1)
    (unit-mean squared Rayleigh envelope), independent per link and RB.
    """
    g_rj, g_rm, g_hm = gains0
    kr, kh = cfg.num_rb_rrh, cfg.num_rb_hpn
    f_rj = rng.exponential(1.0, size=g_rj.shape + (kr,))
    f_rm = rng.exponential(1.0, size=g_rm.shape + (kr,))
    f_hm = rng.exponential(1.0, size=g_hm.shape + (kh,))
    return ChannelState(
        g_rrh_rue=g_rj[:, :, None] * f_rj,
        g_rrh_hue=g_rm[:, :, None] * f_rm,
        g_hpn_hue=g_hm[:, None] * f_hm,
    )


def draw_arrivals(cfg: NetworkConfig, spec: ArrivalSpec,
                  rng: np.random.Generator, t: int = 0):
    """Bits arriving this slot: (a_hue (M,), a_rue (J,)) floats."""
    m, j = cfg.num_hue, cfg.num_rue
    if spec.kind == "poisson":
        a_hue = rng.poisson(spec.mean_hue, size=m).astype(float)
        a_rue = rng.poisson(spec.mean_rue, size=j).astype(float)
    elif spec.kind == "bernoulli":
        a_hue = spec.cap_hue * (rng.random(m) < spec.mean_hue / spec.cap_hue)
        a_rue = spec.cap_rue * (rng.random(j) < spec.mean_rue / spec.cap_rue)
        a_hue, a_rue = a_hue.astype(float), a_rue.astype(float)
    elif spec.kind == "timevarying":
        mod = 1.0 + spec.depth * np.sin(2.0 * np.pi * t / spec.period)
        a_hue = rng.poisson(spec.mean_hue * mod, size=m).astype(float)
        a_rue = rng.poisson(spec.mean_rue * mod, size=j).astype(float)
    else:  # unreachable; __post_init__ validates
        raise ValueError(f"unknown arrival kind {spec.kind!r}")
    return (np.minimum(a_hue, spec.cap_hue),
            np.minimum(a_rue, spec.cap_rue))


def spawn_streams(seed: int):
    """Independent child generators (placement, arrivals, channel)."""
    ss = np.random.SeedSequence(seed)
    kids = ss.spawn(3)
    return (np.random.default_rng(kids[0]),
            np.random.default_rng(kids[1]),
            np.random.default_rng(kids[2]))
