"""Classical compensation chain: TAC conversion and Pockels phase.

The measured detection-time difference, shifted by a fixed plus an
adjustable delay, drives a unipolar time-to-amplitude converter whose
output sets the phase a Pockels cell writes onto the |V> component of
photon A.  Values outside the converter range are clipped, not vetoed;
optional quantization models the digitizer step.  Latency figures are
carried as metadata only, they do not move any simulated observable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FeedForwardConfig:
    delta_omega_setting: float          # rad/s programmed into the chain
    fixed_offset: float = 150e-9        # s, makes the TAC input non-negative
    delta_t: float = 0.0                # s, adjustable delay knob
    tac_range: float = 300e-9           # s, unipolar full scale
    tac_resolution: float = 0.0         # s, 0 means continuous
    enabled: bool = True
    chain_latency: float = 360e-9       # s, metadata
    compensation_delay: float = 735e-9  # s, metadata (fiber storage loop)

    def __post_init__(self):
        if not self.tac_range > 0.0:
            raise ValueError(f"tac_range must be positive, got {self.tac_range}")
        if self.tac_resolution < 0.0:
            raise ValueError(f"tac_resolution must be >= 0, got {self.tac_resolution}")
        if self.fixed_offset < 0.0:
            raise ValueError(f"fixed_offset must be >= 0, got {self.fixed_offset}")


def tac_convert(measured_dt, cfg: FeedForwardConfig):
    """Shifted, clipped, quantized converter output for a measured t1 - t2.

    tac_in = measured_dt + fixed_offset + delta_t, clipped to
    [0, tac_range]; with a nonzero resolution the clipped value rounds
    half away from zero to the nearest representable step.
    """
    tac_in = np.asarray(measured_dt, dtype=float) + cfg.fixed_offset + cfg.delta_t
    out = np.clip(tac_in, 0.0, cfg.tac_range)
    if cfg.tac_resolution > 0.0:
        res = cfg.tac_resolution
        out = np.floor(out / res + 0.5) * res
        out = np.minimum(out, np.floor(cfg.tac_range / res) * res)
    if out.ndim == 0:
        return float(out)
    return out


def pockels_phase(tac_out, cfg: FeedForwardConfig):
    """Phase written onto |V>_A for a given converter output (radians).

    phase = delta_omega_setting * (2 (fixed_offset + delta_t) - tac_out);
    with continuous, unclipped conversion this reduces to
    delta_omega_setting * (fixed_offset + delta_t - measured_dt).
    """
    if not cfg.enabled:
        raise ValueError("pockels_phase requires an enabled feed-forward chain")
    shift = cfg.fixed_offset + cfg.delta_t
    phase = cfg.delta_omega_setting * (2.0 * shift - np.asarray(tac_out, dtype=float))
    if phase.ndim == 0:
        return float(phase)
    return phase


def residual_phase(true_dt, measured_dt, cfg: FeedForwardConfig):
    """Phase error left on the |VV> branch after ideal (continuous,
    unclipped) compensation:
    delta_omega_setting * (true_dt - measured_dt + fixed_offset + delta_t).

    Zero mod 2pi exactly when timing is exact and the delay shift is an
    integer number of beat periods.
    """
    dw = cfg.delta_omega_setting
    err = np.asarray(true_dt, dtype=float) - np.asarray(measured_dt, dtype=float)
    phase = dw * err + dw * (cfg.fixed_offset + cfg.delta_t)
    if phase.ndim == 0:
        return float(phase)
    return phase
