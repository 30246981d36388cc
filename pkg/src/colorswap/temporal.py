"""Temporal wavepackets and the time-resolved conditional swap state.

Model
-----
Each source emits photon pairs with a single-sided exponential mode
envelope sqrt(gamma) * exp(-gamma (t - t_e) / 2) for t >= t_e, where t_e
is the emission time inside a rectangular pump pulse of width T and gamma
is the intensity decay rate (gamma / 2pi is the linewidth in Hz).

A joint detection at the two Bell-measurement ports at times (t1, t2)
projects the two undetected photons onto

    c_HH |HH>  -+  exp(i dw (t1 - t2)) c_VV |VV>

with c_HH = g(t1) f(t2), c_VV = f(t1) g(t2) (f, g the two envelopes) and
dw the angular frequency difference between the sources.  The upper sign
belongs to the even-parity outcome of the port analyzers, the lower to
the odd one.

Long pump pulses localize each pair's emission time near its detection
time, which tags the two interfering amplitudes with partner-photon
wavepackets of reduced overlap.  `coherence_factor` computes that overlap
by numerical quadrature; `window_averaged_state` folds everything into
the deterministic mixed state seen inside a coincidence window, the
reference the Monte Carlo engine is validated against.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np

from .feedforward import tac_convert, pockels_phase
from .polarization import TwoQubitDensity

Array = np.ndarray


@dataclass(frozen=True)
class ModeParams:
    """One source's temporal mode: decay rate gamma (1/s) and angular
    frequency offset from the common reference (rad/s)."""

    gamma: float
    omega_offset: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class PumpParams:
    """Rectangular pump pulse on [0, width] seconds."""

    width: float

    def __post_init__(self):
        if not self.width > 0.0:
            raise ValueError(f"pump width must be positive, got {self.width}")


class BsmBranch(enum.Enum):
    """Which Bell branch the port analyzers heralded.

    PHI_PLUS is the even outcome pattern (both analyzers agree), PHI_MINUS
    the odd one; they differ by the sign in front of the |VV> amplitude.
    """

    PHI_PLUS = "phi_plus"
    PHI_MINUS = "phi_minus"

    @property
    def vv_sign(self) -> int:
        return -1 if self is BsmBranch.PHI_PLUS else +1


def delta_omega(mode_a: ModeParams, mode_b: ModeParams) -> float:
    """Angular frequency difference dw = w_a - w_b (rad/s)."""
    return mode_a.omega_offset - mode_b.omega_offset


def mode_amplitude(mode: ModeParams, t, emission_time: float = 0.0):
    """Envelope amplitude sqrt(gamma) exp(-gamma (t - t_e)/2), zero before emission.

    Normalized so the intensity integrates to one; the optical carrier
    phase is carried separately at the interference level.
    """
    t = np.asarray(t, dtype=float)
    dt = t - emission_time
    amp = np.where(dt >= 0.0, np.sqrt(mode.gamma) * np.exp(-0.5 * mode.gamma * np.clip(dt, 0.0, None)), 0.0)
    if amp.ndim == 0:
        return float(amp)
    return amp


def conditional_swap_state(
    t1: float,
    t2: float,
    mode_a: ModeParams,
    mode_b: ModeParams,
    branch: BsmBranch,
    emission_time_a: float = 0.0,
    emission_time_b: float = 0.0,
) -> TwoQubitDensity:
    """Two-qubit state heralded by port detections at (t1, t2), before any
    compensation.

    The |HH> amplitude is g(t1) f(t2), the |VV> amplitude
    sign * exp(i dw (t1-t2)) f(t1) g(t2), where f belongs to source a and
    g to source b.  If exactly one amplitude is zero (one photon ordering
    impossible given the emission times) the corresponding product state
    is returned; if both vanish the detections could not have happened and
    a ValueError is raised.
    """
    c_hh = mode_amplitude(mode_b, t1, emission_time_b) * mode_amplitude(mode_a, t2, emission_time_a)
    c_vv = mode_amplitude(mode_a, t1, emission_time_a) * mode_amplitude(mode_b, t2, emission_time_b)
    if c_hh == 0.0 and c_vv == 0.0:
        raise ValueError("both branch amplitudes vanish: detections precede every emission")
    phase = delta_omega(mode_a, mode_b) * (t1 - t2)
    psi = np.zeros(4, dtype=complex)
    psi[0] = c_hh
    psi[3] = branch.vv_sign * c_vv * np.exp(1j * phase)
    psi /= np.linalg.norm(psi)
    return TwoQubitDensity(np.outer(psi, psi.conj()))


def joint_detection_density(
    t1: float,
    t2: float,
    mode_a: ModeParams,
    mode_b: ModeParams,
    emission_time_a: float = 0.0,
    emission_time_b: float = 0.0,
):
    """Unnormalized density of accepted port coincidences at (t1, t2),
    conditional on the two emission times:
    (|g(t1) f(t2)|^2 + |f(t1) g(t2)|^2) / 2."""
    f1 = mode_amplitude(mode_a, t1, emission_time_a)
    f2 = mode_amplitude(mode_a, t2, emission_time_a)
    g1 = mode_amplitude(mode_b, t1, emission_time_b)
    g2 = mode_amplitude(mode_b, t2, emission_time_b)
    return 0.5 * ((g1 * f2) ** 2 + (f1 * g2) ** 2)


# ---------------------------------------------------------------------------
# Pump-averaged kernels.
#
# With the emission time uniform on [0, T], the one-photon arrival density
# and the two-time amplitude kernel have closed forms for the exponential
# envelope; both are cross-checked against direct quadrature in the tests.
# ---------------------------------------------------------------------------


def pump_marginal_intensity(mode: ModeParams, pump: PumpParams, t):
    """Arrival-time density M(t) = (1/T) integral |h(t - e)|^2 de, e ~ U[0, T]."""
    t = np.asarray(t, dtype=float)
    g, big_t = mode.gamma, pump.width
    inside = (1.0 - np.exp(-g * np.clip(t, 0.0, None))) / big_t
    after = -np.expm1(-g * big_t) / big_t * np.exp(-g * np.clip(t - big_t, 0.0, None))
    out = np.where(t <= 0.0, 0.0, np.where(t < big_t, inside, after))
    if out.ndim == 0:
        return float(out)
    return out


def pump_pair_kernel(mode: ModeParams, pump: PumpParams, t1, t2):
    """Amplitude kernel G(t1, t2) = (1/T) integral h(t1 - e) h(t2 - e) de.

    G(t, t) reduces to the arrival density M(t); off the diagonal it decays
    with |t1 - t2| and is the building block of the which-source coherence.
    """
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    g, big_t = mode.gamma, pump.width
    m = np.minimum(np.minimum(t1, t2), big_t)
    val = np.exp(g * (m - 0.5 * (t1 + t2))) * (-np.expm1(-g * np.clip(m, 0.0, None))) / big_t
    out = np.where(m <= 0.0, 0.0, val)
    if out.ndim == 0:
        return float(out)
    return out


def _required_nodes(pump: PumpParams, gamma: float) -> int:
    # Resolution rule: at least 512 nodes per decade of separation between
    # the pump width and the mode decay time.
    sep = max(pump.width * gamma, 1.0 / (pump.width * gamma))
    decades = math.log10(max(sep, 1.0))
    return max(1025, int(512 * decades) | 1)


def _mode_overlap_factor(
    t1: float, t2: float, pump: PumpParams, mode: ModeParams, nodes: int
) -> float:
    # Normalized overlap of the partner wavepackets conditioned on a port
    # detection at t1 versus t2, for one source.  The pair amplitude is
    # psi(s, t) = (1/T) integral_0^T P(e) h(s - e) h(t - e) de; the overlap
    # is O(t1, t2)/sqrt(O(t1, t1) O(t2, t2)), O(u, v) = integral_s psi(s,u) psi(s,v).
    g, big_t = mode.gamma, pump.width
    t_top = max(t1, t2, big_t)
    s_max = t_top + 8.0 / g

    # Emission support ends at min(s, t, T); rescaling e = m x puts that
    # cutoff exactly on the grid edge so the quadrature sees no jump.
    x = np.linspace(0.0, 1.0, nodes)
    w_x = np.full(nodes, 1.0 / (nodes - 1))
    w_x[0] *= 0.5
    w_x[-1] *= 0.5

    def psi(s: Array, t: float) -> Array:
        m = np.minimum(np.minimum(s, t), big_t)
        m = np.clip(m, 0.0, None)
        e = m[:, None] * x[None, :]
        vals = np.exp(-0.5 * g * (s[:, None] - e)) * np.exp(-0.5 * g * (t - e))
        return m * (vals @ w_x)

    def integrals(n_s: int) -> tuple[float, float, float]:
        s = np.linspace(0.0, s_max, n_s)
        p1 = psi(s, t1)
        p2 = psi(s, t2)
        w_s = np.full(n_s, s_max / (n_s - 1))
        w_s[0] *= 0.5
        w_s[-1] *= 0.5
        o11 = float((w_s * p1 * p1).sum())
        o22 = float((w_s * p2 * p2).sum())
        o12 = float((w_s * p1 * p2).sum())
        return o11, o22, o12

    n_s = 4097
    prev = None
    for _ in range(4):
        o11, o22, o12 = integrals(n_s)
        if o11 <= 0.0 or o22 <= 0.0:
            raise ValueError(f"detection times ({t1}, {t2}) lie outside the mode support")
        value = o12 / math.sqrt(o11 * o22)
        if prev is not None and abs(value - prev) <= 1e-4 * max(abs(value), 1e-12):
            break
        prev = value
        n_s = 2 * n_s - 1
    return min(max(value, 0.0), 1.0)


def coherence_factor(
    t1: float,
    t2: float,
    pump: PumpParams,
    mode_a: ModeParams,
    mode_b: ModeParams,
    nodes: int | None = None,
) -> float:
    """Magnitude of the which-source coherence surviving the partner trace.

    Equals 1 at t1 == t2 and in the short-pump limit; long pumps localize
    the emission near the detection and the overlap of the two partner
    wavepackets decays with |t1 - t2|.  Computed by adaptive trapezoid
    quadrature; `nodes` overrides the emission-time grid and is rejected
    if it under-resolves the pump/decay scale separation.
    """
    if t1 <= 0.0 or t2 <= 0.0:
        raise ValueError("detection times must be positive (pulse starts at t = 0)")
    for mode in (mode_a, mode_b):
        required = _required_nodes(pump, mode.gamma)
        if nodes is not None and nodes < required:
            raise ValueError(
                f"{nodes} emission nodes under-resolve the pump/decay scales "
                f"(need >= {required})"
            )
    if t1 == t2:
        return 1.0
    value = 1.0
    for mode in (mode_a, mode_b):
        n = nodes if nodes is not None else _required_nodes(pump, mode.gamma)
        value *= _mode_overlap_factor(t1, t2, pump, mode, n)
    return min(max(value, 0.0), 1.0)


# ---------------------------------------------------------------------------
# Fast coherence table.
#
# The engine needs the coherence factor per event and the window oracle
# needs it on a dense grid; evaluating the nested quadrature pointwise is
# far too slow for that.  The same integrals collapse into Gram matrices
# over a shared time grid, built once per (gamma_a, gamma_b, pump) and
# interpolated bilinearly.  Tests pin the table against the pointwise
# quadrature above.
# ---------------------------------------------------------------------------


class CoherenceTable:
    """Bilinear-interpolated kappa(t1, t2) on a uniform grid [0, t_max]^2."""

    def __init__(self, t_max: float, values: Array):
        self.t_max = float(t_max)
        self.values = values
        self.n = values.shape[0]
        self.step = self.t_max / (self.n - 1)

    def lookup(self, t1, t2):
        x = np.clip(np.asarray(t1, dtype=float) / self.step, 0.0, self.n - 1.000001)
        y = np.clip(np.asarray(t2, dtype=float) / self.step, 0.0, self.n - 1.000001)
        i = x.astype(np.int64)
        j = y.astype(np.int64)
        fx = x - i
        fy = y - j
        v = self.values
        out = (
            v[i, j] * (1 - fx) * (1 - fy)
            + v[i + 1, j] * fx * (1 - fy)
            + v[i, j + 1] * (1 - fx) * fy
            + v[i + 1, j + 1] * fx * fy
        )
        return out


def _single_mode_overlap_grid(gamma: float, pump_width: float, t_grid: Array) -> Array:
    # O(t, t') Gram matrix for one mode on t_grid.  For the rectangular
    # pump the emission integral has the pair-kernel closed form, so psi is
    # filled exactly and only the partner time s is quadratured.
    mode = ModeParams(gamma)
    pump = PumpParams(pump_width)
    s_max = t_grid[-1] + 8.0 / gamma
    n_s = 8193
    s = np.linspace(0.0, s_max, n_s)
    w_s = np.full(n_s, s_max / (n_s - 1))
    w_s[0] *= 0.5
    w_s[-1] *= 0.5
    psi = pump_pair_kernel(mode, pump, s[:, None], t_grid[None, :])  # (n_s, n_t)
    overlap = psi.T @ (w_s[:, None] * psi)
    return overlap


@functools.lru_cache(maxsize=8)
def _coherence_table_cached(
    gamma_a: float, gamma_b: float, pump_width: float, t_max: float, n_grid: int
) -> CoherenceTable:
    t_grid = np.linspace(0.0, t_max, n_grid)
    kappa = np.ones((n_grid, n_grid))
    for gamma in (gamma_a, gamma_b):
        o = _single_mode_overlap_grid(gamma, pump_width, t_grid)
        d = np.sqrt(np.clip(np.diag(o), 0.0, None))
        with np.errstate(divide="ignore", invalid="ignore"):
            norm = o / np.outer(d, d)
        norm[~np.isfinite(norm)] = 1.0
        kappa *= np.clip(norm, 0.0, 1.0)
    # The t = 0 row carries a quadrature sliver with no physical weight
    # (the arrival density vanishes there); nearest-row extrapolation keeps
    # bilinear lookups near the origin from mixing it in.
    kappa[0, :] = kappa[1, :]
    kappa[:, 0] = kappa[:, 1]
    return CoherenceTable(t_max, kappa)


def coherence_table(
    pump: PumpParams, mode_a: ModeParams, mode_b: ModeParams, t_max: float, n_grid: int = 192
) -> CoherenceTable:
    return _coherence_table_cached(mode_a.gamma, mode_b.gamma, pump.width, t_max, n_grid)


# ---------------------------------------------------------------------------
# Window-averaged state: the deterministic oracle.
# ---------------------------------------------------------------------------


def horizon(config) -> float:
    """Upper edge of the detection-time support used by the oracle and the
    engine's coherence table (pump width plus twelve decay times)."""
    g_min = min(config.source_a.mode.gamma, config.source_b.mode.gamma)
    return config.pump.width + 12.0 / g_min


def _phase_and_clip(deltas: Array, fwd, enabled: bool) -> tuple[Array, Array]:
    # Compensated coherence phase theta(dt) and the clip mask, evaluating
    # the TAC chain at measured == true time difference.
    if not enabled:
        return np.zeros_like(deltas), np.zeros(deltas.shape, dtype=bool)
    tac_in = deltas + fwd.fixed_offset + fwd.delta_t
    clipped = (tac_in < 0.0) | (tac_in > fwd.tac_range)
    tac_out = tac_convert(deltas, fwd)
    phi_p = pockels_phase(tac_out, fwd)
    return phi_p, clipped


def window_averaged_state(
    config,
    *,
    window: float | None = None,
    delta_t_offset: float | None = None,
    feedforward_enabled: bool | None = None,
    mean_nodes: int = 1201,
) -> TwoQubitDensity:
    """Mixed state of the outer photon pair averaged over all accepted
    coincidences with |t1 - t2| <= window, computed by 2-D quadrature.

    Populations come from the pump-averaged arrival densities, the
    coherence from the pair kernels times the coherence factor, the phase
    per time difference from the beat plus the full compensation chain
    (including clipping and quantization).  Detector jitter enters as the
    analytic Gaussian dephasing of the compensated phase.  This is the
    reference the Monte Carlo engine is compared against; it shares the
    single-point physics functions but integrates deterministically.
    """
    import dataclasses as _dc

    fwd = config.feedforward
    if delta_t_offset is not None:
        fwd = _dc.replace(fwd, delta_t=delta_t_offset)
    enabled = fwd.enabled if feedforward_enabled is None else feedforward_enabled
    win = config.coincidence_window if window is None else window
    if not win > 0.0:
        raise ValueError(f"coincidence window must be positive, got {win}")

    mode_a, mode_b = config.source_a.mode, config.source_b.mode
    pump = config.pump
    dw = delta_omega(mode_a, mode_b)
    t_max = horizon(config)
    table = coherence_table(pump, mode_a, mode_b, t_max)

    half_width = min(win, t_max)
    slope = abs(dw) + 0.5 * (mode_a.gamma + mode_b.gamma)
    if enabled:
        slope += abs(fwd.delta_omega_setting)
    # Resolve the fastest phase to ~0.02 rad per step so the trapezoid
    # error on the oscillatory coherence integral stays below ~3e-5.
    n_dt = int(2.0 * half_width * slope / 0.02) + 1
    n_dt = int(np.clip(n_dt, 1201, 48001)) | 1
    deltas = np.linspace(-half_width, half_width, n_dt)

    u = np.linspace(0.0, t_max, mean_nodes)
    du = u[1] - u[0]

    d_hh = np.empty(n_dt)
    d_vv = np.empty(n_dt)
    coh = np.empty(n_dt)
    chunk = 512
    for lo in range(0, n_dt, chunk):
        hi = min(lo + chunk, n_dt)
        d = deltas[lo:hi, None]
        t1 = u[None, :] + 0.5 * d
        t2 = u[None, :] - 0.5 * d
        ma1 = pump_marginal_intensity(mode_a, pump, t1)
        mb1 = pump_marginal_intensity(mode_b, pump, t1)
        ma2 = pump_marginal_intensity(mode_a, pump, t2)
        mb2 = pump_marginal_intensity(mode_b, pump, t2)
        d_hh[lo:hi] = np.trapezoid(mb1 * ma2, dx=du, axis=1)
        d_vv[lo:hi] = np.trapezoid(ma1 * mb2, dx=du, axis=1)
        ga = pump_pair_kernel(mode_a, pump, t1, t2)
        gb = pump_pair_kernel(mode_b, pump, t1, t2)
        kap = table.lookup(t1, t2)
        coh[lo:hi] = np.trapezoid(kap * ga * gb, dx=du, axis=1)

    phi_p, clipped = _phase_and_clip(deltas, fwd, enabled)
    theta = dw * deltas + phi_p
    jitter_sigma = math.hypot(config.bsm_d1.jitter_sigma, config.bsm_d2.jitter_sigma)
    if enabled and jitter_sigma > 0.0:
        j_factor = np.where(
            clipped, 1.0, math.exp(-0.5 * (fwd.delta_omega_setting * jitter_sigma) ** 2)
        )
    else:
        j_factor = np.ones_like(deltas)

    d_delta = deltas[1] - deltas[0]
    p_hh = np.trapezoid(d_hh, dx=d_delta)
    p_vv = np.trapezoid(d_vv, dx=d_delta)
    coherence = np.trapezoid(
        coh * config.mode_overlap * j_factor * np.exp(-1j * theta), dx=d_delta
    )

    total = p_hh + p_vv
    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = p_hh / total
    rho[3, 3] = p_vv / total
    c = coherence / total
    cap = math.sqrt(rho[0, 0].real * rho[3, 3].real) * (1.0 - 1e-12)
    if abs(c) > cap:
        c *= cap / abs(c)
    rho[0, 3] = c
    rho[3, 0] = np.conj(c)
    return TwoQubitDensity(rho)


def delta_t_density(config, deltas: Array, mean_nodes: int = 1201) -> Array:
    """Unnormalized density of the true time difference t1 - t2 for signal
    coincidences, pump-averaged (the quadrature marginal of the joint
    detection density)."""
    mode_a, mode_b = config.source_a.mode, config.source_b.mode
    pump = config.pump
    t_max = horizon(config)
    u = np.linspace(0.0, t_max, mean_nodes)
    du = u[1] - u[0]
    out = np.empty(len(deltas))
    chunk = 512
    for lo in range(0, len(deltas), chunk):
        hi = min(lo + chunk, len(deltas))
        d = np.asarray(deltas[lo:hi])[:, None]
        t1 = u[None, :] + 0.5 * d
        t2 = u[None, :] - 0.5 * d
        ma1 = pump_marginal_intensity(mode_a, pump, t1)
        mb1 = pump_marginal_intensity(mode_b, pump, t1)
        ma2 = pump_marginal_intensity(mode_a, pump, t2)
        mb2 = pump_marginal_intensity(mode_b, pump, t2)
        out[lo:hi] = 0.5 * np.trapezoid(mb1 * ma2 + ma1 * mb2, dx=du, axis=1)
    return out
