# queues.py
# Traffic queues and the virtual queues that enforce the long-run
# constraints. All queue values are in bits (the efficiency queue mixes
# bit and joule units by construction; see update_virtual_z).

from dataclasses import dataclass, field

import numpy as np

from .model import NetworkConfig


@dataclass
class QueueState:
    """Backlogs driving the per-slot optimization.

    q_hue/q_rue — transmit (traffic) queues, bits
    h_hue/h_rue — auxiliary-rate tracking queues, bits
    z_ee        — efficiency-guarantee queue, scalar
    """

    q_hue: np.ndarray
    q_rue: np.ndarray
    h_hue: np.ndarray
    h_rue: np.ndarray
    z_ee: float = 0.0

    @classmethod
    def zeros(cls, cfg: NetworkConfig) -> "QueueState":
        return cls(q_hue=np.zeros(cfg.num_hue), q_rue=np.zeros(cfg.num_rue),
                   h_hue=np.zeros(cfg.num_hue), h_rue=np.zeros(cfg.num_rue),
                   z_ee=0.0)

    def copy(self) -> "QueueState":
        return QueueState(q_hue=self.q_hue.copy(), q_rue=self.q_rue.copy(),
                          h_hue=self.h_hue.copy(), h_rue=self.h_rue.copy(),
                          z_ee=self.z_ee)

    def lyapunov_value(self) -> float:
        """0.5 * (sum Q^2 + sum H^2 + Z^2)."""
        return 0.5 * (float(np.dot(self.q_hue, self.q_hue))
                      + float(np.dot(self.q_rue, self.q_rue))
                      + float(np.dot(self.h_hue, self.h_hue))
                      + float(np.dot(self.h_rue, self.h_rue))
                      + self.z_ee ** 2)


def update_traffic_queues(q: np.ndarray, service_bits: np.ndarray,
                          admitted_bits: np.ndarray) -> np.ndarray:
    """Q(t+1) = max(Q - service, 0) + admitted (service applied first)."""
    return np.maximum(q - service_bits, 0.0) + admitted_bits


def update_virtual_h(h: np.ndarray, admitted_bits: np.ndarray,
                     aux_bits: np.ndarray) -> np.ndarray:
    """H(t+1) = max(H - admitted, 0) + aux.

    Keeps the long-run auxiliary rate below the long-run admitted rate,
    which transfers utility of the auxiliaries onto the real throughput.
    """
    return np.maximum(h - admitted_bits, 0.0) + aux_bits


def update_virtual_z(z: float, rate_sum: float, power_drain: float,
                     cfg: NetworkConfig) -> float:
    """Z(t+1) = max(Z - mu_sum, 0) + W * ee_required * p_drain.

    mu_sum is the total instantaneous rate in bit/s (not bits per slot)
    and p_drain the drain-weighted power in watts; a positive drift of Z
    means the efficiency target is currently violated, and Z pushes the
    scheduler toward cheaper transmissions until the long-run ratio
    rate / (W * power) reaches ee_required.
    """
    return max(z - rate_sum, 0.0) \
        + cfg.bandwidth_total * cfg.ee_required * power_drain
