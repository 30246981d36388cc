"""Two-qubit polarization states and the correlation estimators built on them.

Everything downstream (the event engine, the window-averaged oracle, the
witness estimators) reduces to a handful of operations on 4x4 density
matrices in the fixed product basis |HH>, |HV>, |VH>, |VV>.  The first
index is the photon kept at station A, the second at station B.

Sign conventions, chosen once and used everywhere:

* sigma_z eigenstates are |H> (+1) and |V> (-1).
* sigma_x eigenstates are |+> = (|H>+|V>)/sqrt2 (+1) and |-> (-1); a linear
  analyzer at angle theta transmits cos(theta)|H> + sin(theta)|V>, so
  theta = 0 measures z and theta = pi/4 measures x.
* sigma_y eigenstates are (|H>+i|V>)/sqrt2 (+1) and (|H>-i|V>)/sqrt2 (-1),
  reached in hardware by a quarter-wave retarder in front of the analyzer.
  With these choices <sigma_y sigma_y> = -1 for (|HH>+|VV>)/sqrt2, which
  pins the entanglement witness of that state at -1/2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Array = np.ndarray

DIM = 4

# Pauli operators on one qubit, basis |H>, |V>.
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}

_HERMITICITY_TOL = 1e-12
_TRACE_TOL = 1e-12
_PSD_TOL = -1e-9


class StateValidationError(ValueError):
    """Raised when a candidate matrix is not a physical two-qubit state."""


class TwoQubitDensity:
    """A validated, immutable 4x4 density matrix.

    Construction enforces hermiticity (1e-12), unit trace (1e-12) and
    positive semidefiniteness (eigenvalues >= -1e-9); the wrapped array is
    write-locked so instances can be shared freely.
    """

    __slots__ = ("matrix",)

    def __init__(self, matrix: Array):
        m = np.asarray(matrix, dtype=complex)
        if m.shape != (DIM, DIM):
            raise StateValidationError(f"expected 4x4 matrix, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > _HERMITICITY_TOL:
            raise StateValidationError("matrix is not hermitian")
        if abs(m.trace().real - 1.0) > _TRACE_TOL or abs(m.trace().imag) > _TRACE_TOL:
            raise StateValidationError(f"trace is {m.trace()}, expected 1")
        if np.linalg.eigvalsh(m).min() < _PSD_TOL:
            raise StateValidationError("matrix has a negative eigenvalue")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __setattr__(self, name, value):
        raise AttributeError("TwoQubitDensity is immutable")

    def __repr__(self):
        return f"TwoQubitDensity(trace={self.matrix.trace().real:.6f})"

    def coherence_hh_vv(self) -> complex:
        """The <HH|rho|VV> matrix element (the only coherence the swap produces)."""
        return complex(self.matrix[0, 3])


@dataclass(frozen=True)
class AnalyzerSetting:
    """Polarization analyzers at the two outer stations.

    angle_a / angle_b are linear-analyzer angles in radians, restricted to
    [0, pi).  `circular` inserts a quarter-wave retarder at both stations,
    turning the +/- outcomes into the sigma_y eigenbasis; the angles are
    ignored in that case.  (The witness needs all three Pauli axes and two
    linear angles alone cannot reach sigma_y.)
    """

    angle_a: float
    angle_b: float
    circular: bool = False

    def __post_init__(self):
        for name, angle in (("angle_a", self.angle_a), ("angle_b", self.angle_b)):
            if not 0.0 <= angle < np.pi:
                raise ValueError(f"{name} must lie in [0, pi), got {angle}")

    def pauli_axis(self) -> str | None:
        """Map this setting onto a Pauli axis label, or None if it is neither."""
        if self.circular:
            return "y"
        if abs(self.angle_a) < 1e-12 and abs(self.angle_b) < 1e-12:
            return "z"
        if abs(self.angle_a - np.pi / 4) < 1e-12 and abs(self.angle_b - np.pi / 4) < 1e-12:
            return "x"
        return None


def _analysis_states(angle: float, circular: bool) -> tuple[Array, Array]:
    # Single-qubit kets transmitted into the +1 / -1 detector.
    if circular:
        plus = np.array([1.0, 1.0j], dtype=complex) / np.sqrt(2.0)
        minus = np.array([1.0, -1.0j], dtype=complex) / np.sqrt(2.0)
    else:
        c, s = np.cos(angle), np.sin(angle)
        plus = np.array([c, s], dtype=complex)
        minus = np.array([-s, c], dtype=complex)
    return plus, minus


def phase_bell_state(phi: float, amplitude_ratio: float = 1.0, sign: int = 1) -> TwoQubitDensity:
    """Pure state (|HH> + sign * r * exp(i phi) |VV>) / sqrt(1 + r^2) as a density matrix.

    This is the family every accepted swap event lands in; r captures the
    amplitude imbalance accumulated from unequal source linewidths and phi
    the beat plus compensation phase.
    """
    if amplitude_ratio < 0.0:
        raise ValueError("amplitude ratio must be non-negative")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    psi = np.zeros(DIM, dtype=complex)
    psi[0] = 1.0
    psi[3] = sign * amplitude_ratio * np.exp(1j * phi)
    psi /= np.linalg.norm(psi)
    return TwoQubitDensity(np.outer(psi, psi.conj()))


def bell_phi(sign: int = 1) -> TwoQubitDensity:
    """(|HH> + sign|VV>)/sqrt2."""
    return phase_bell_state(0.0, 1.0, sign)


def maximally_mixed() -> TwoQubitDensity:
    return TwoQubitDensity(np.eye(DIM, dtype=complex) / DIM)


def correlator(rho: TwoQubitDensity, axis: str) -> float:
    """<sigma_axis x sigma_axis> for axis in {x, y, z}."""
    try:
        pauli = PAULI[axis]
    except KeyError:
        raise ValueError(f"axis must be one of x, y, z, got {axis!r}") from None
    value = np.trace(rho.matrix @ np.kron(pauli, pauli))
    if abs(value.imag) > 1e-10:
        raise StateValidationError(f"correlator came out complex: {value}")
    return float(value.real)


def witness(rho: TwoQubitDensity) -> float:
    """Entanglement witness W = (1 - <xx> + <yy> - <zz>) / 4.

    Negative values certify entanglement; the floor is -1/2, reached by
    (|HH> + |VV>)/sqrt2 under the sign conventions in the module docstring.
    """
    return 0.25 * (
        1.0 - correlator(rho, "x") + correlator(rho, "y") - correlator(rho, "z")
    )


def outcome_probabilities(rho: TwoQubitDensity, setting: AnalyzerSetting) -> Array:
    """Probabilities of the four coincidence outcomes (++, +-, -+, --).

    Outcome order is (A,B) in {(+,+), (+,-), (-,+), (-,-)} where + means the
    photon was transmitted into the +1 detector of the analyzer.
    """
    a_plus, a_minus = _analysis_states(setting.angle_a, setting.circular)
    b_plus, b_minus = _analysis_states(setting.angle_b, setting.circular)
    probs = np.empty(4)
    for i, (ka, kb) in enumerate(
        ((a_plus, b_plus), (a_plus, b_minus), (a_minus, b_plus), (a_minus, b_minus))
    ):
        ket = np.kron(ka, kb)
        probs[i] = np.real(ket.conj() @ rho.matrix @ ket)
    probs = np.clip(probs, 0.0, None)
    total = probs.sum()
    if abs(total - 1.0) > 1e-9:
        raise StateValidationError(f"outcome probabilities sum to {total}")
    return probs / total


def apply_phase_on_a(rho: TwoQubitDensity, phi: float) -> TwoQubitDensity:
    """Phase shift |V>_A -> exp(i phi)|V>_A, the action of the compensation modulator."""
    phases = np.array([1.0, 1.0, np.exp(1j * phi), np.exp(1j * phi)], dtype=complex)
    u = np.diag(phases)
    return TwoQubitDensity(u @ rho.matrix @ u.conj().T)


def dephase_vv_hh(rho: TwoQubitDensity, factor: float) -> TwoQubitDensity:
    """Scale the |HH><VV| coherence by `factor` in [0, 1], leaving populations alone.

    This is how partial which-source distinguishability (finite pump length,
    imperfect spatial overlap) enters the two-qubit state.
    """
    if not 0.0 <= factor <= 1.0:
        raise ValueError(f"dephasing factor must lie in [0, 1], got {factor}")
    m = rho.matrix.copy()
    m[0, 3] *= factor
    m[3, 0] *= factor
    return TwoQubitDensity(m)


def partial_trace(rho: TwoQubitDensity, keep: str) -> Array:
    """Reduced 2x2 state of station 'a' or 'b'."""
    m = rho.matrix.reshape(2, 2, 2, 2)
    if keep == "a":
        return np.trace(m, axis1=1, axis2=3)
    if keep == "b":
        return np.trace(m, axis1=0, axis2=2)
    raise ValueError("keep must be 'a' or 'b'")


def trace_distance(rho1: TwoQubitDensity, rho2: TwoQubitDensity) -> float:
    eigs = np.linalg.eigvalsh(rho1.matrix - rho2.matrix)
    return 0.5 * float(np.abs(eigs).sum())
