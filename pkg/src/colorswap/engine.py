"""Seeded Monte Carlo generator of four-fold coincidence events.

The pulse stream is processed in fixed-size chunks, each with its own
random generator derived from (seed, chunk index), so the result is
independent of how many worker threads consume the chunks.  Per pulse one
uniform decides whether the pulse yields a signal candidate (exactly one
pair from each source), a double-emission candidate, or nothing; each
candidate then consumes a fixed block of randoms in kernels.py.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .config import ExperimentConfig, config_hash
from .temporal import BsmBranch, coherence_table, delta_t_density, horizon

CHUNK_PULSES = 1 << 20

BRANCH_NAMES = ("phi_plus", "phi_minus")
CLASS_NAMES = ("signal", "multipair_background")

_EVENT_COLUMNS = (
    "pulse_index,true_t1_ns,true_t2_ns,measured_t1_ns,measured_t2_ns,"
    "branch,class,phase_rad,outcome_A,outcome_B"
)


@dataclass
class EventLog:
    """Accepted four-fold events as parallel arrays, plus provenance."""

    pulse_index: np.ndarray
    true_t1: np.ndarray
    true_t2: np.ndarray
    measured_t1: np.ndarray
    measured_t2: np.ndarray
    branch: np.ndarray
    event_class: np.ndarray
    phase_applied: np.ndarray
    outcome_a: np.ndarray
    outcome_b: np.ndarray
    config: ExperimentConfig
    seed: int
    n_pulses: int
    n_clipped: int

    def __len__(self) -> int:
        return len(self.pulse_index)

    @property
    def counts(self) -> dict:
        return {
            "pulses": self.n_pulses,
            "accepted": len(self),
            "clipped": self.n_clipped,
            "background": int(np.count_nonzero(self.event_class)),
        }

    def to_csv(self, path) -> None:
        header = (
            f"# eventlog v1 config={config_hash(self.config)} "
            f"seed={self.seed} pulses={self.n_pulses}"
        )
        with open(path, "w", encoding="ascii", newline="\n") as handle:
            handle.write(header + "\n")
            handle.write(_EVENT_COLUMNS + "\n")
            ns = 1e9
            for i in range(len(self)):
                handle.write(
                    f"{self.pulse_index[i]},"
                    f"{self.true_t1[i] * ns:.6f},{self.true_t2[i] * ns:.6f},"
                    f"{self.measured_t1[i] * ns:.6f},{self.measured_t2[i] * ns:.6f},"
                    f"{BRANCH_NAMES[self.branch[i]]},{CLASS_NAMES[self.event_class[i]]},"
                    f"{self.phase_applied[i]:.9f},"
                    f"{self.outcome_a[i]:+d},{self.outcome_b[i]:+d}\n"
                )

    @classmethod
    def from_csv(cls, path, config: ExperimentConfig) -> "EventLog":
        """Read a log written by to_csv.  The caller supplies the config,
        which is checked against the hash stored in the header."""
        with open(path, "r", encoding="ascii") as handle:
            header = handle.readline().strip()
            match = re.match(
                r"# eventlog v1 config=([0-9a-f]{64}) seed=(\d+) pulses=(\d+)$", header
            )
            if match is None:
                raise ValueError(f"not an event log header: {header!r}")
            stored_hash, seed, pulses = match.group(1), int(match.group(2)), int(match.group(3))
            if stored_hash != config_hash(config):
                raise ValueError("config hash in the log header does not match the given config")
            columns = handle.readline().strip()
            if columns != _EVENT_COLUMNS:
                raise ValueError(f"unexpected column header: {columns!r}")
            rows = [line.rstrip("\n").split(",") for line in handle if line.strip()]
        n = len(rows)
        log = cls(
            pulse_index=np.array([int(r[0]) for r in rows], dtype=np.int64),
            true_t1=np.array([float(r[1]) for r in rows]) * 1e-9,
            true_t2=np.array([float(r[2]) for r in rows]) * 1e-9,
            measured_t1=np.array([float(r[3]) for r in rows]) * 1e-9,
            measured_t2=np.array([float(r[4]) for r in rows]) * 1e-9,
            branch=np.array([BRANCH_NAMES.index(r[5]) for r in rows], dtype=np.int8),
            event_class=np.array([CLASS_NAMES.index(r[6]) for r in rows], dtype=np.int8),
            phase_applied=np.array([float(r[7]) for r in rows]),
            outcome_a=np.array([int(r[8]) for r in rows], dtype=np.int8),
            outcome_b=np.array([int(r[9]) for r in rows], dtype=np.int8),
            config=config,
            seed=seed,
            n_pulses=pulses,
            n_clipped=0,
        )
        if n and config.feedforward.enabled:
            fwd = config.feedforward
            tac_in = (log.measured_t1 - log.measured_t2) + fwd.fixed_offset + fwd.delta_t
            log.n_clipped = int(np.count_nonzero((tac_in < 0.0) | (tac_in > fwd.tac_range)))
        return log


def candidate_probabilities(cfg: ExperimentConfig) -> tuple:
    """Per-pulse probabilities of (signal candidate, double emission from
    source a, double emission from source b), from Poisson pair counts."""
    pa = cfg.source_a.pair_probability
    pb = cfg.source_b.pair_probability
    one_a = pa * math.exp(-pa)
    one_b = pb * math.exp(-pb)
    q_signal = one_a * one_b
    if not cfg.multipair_enabled:
        return q_signal, 0.0, 0.0
    at_least_one_a = -math.expm1(-pa)
    at_least_one_b = -math.expm1(-pb)
    multi_a = at_least_one_a - one_a
    multi_b = at_least_one_b - one_b
    q_double_a = multi_a * at_least_one_b
    q_double_b = multi_b * at_least_one_a - multi_a * multi_b
    return q_signal, q_double_a, q_double_b


def _acceptance_probability(cfg: ExperimentConfig) -> float:
    # Port split (1/2) times the four detection efficiencies.
    return (
        0.5
        * cfg.bsm_d1.efficiency
        * cfg.bsm_d2.efficiency
        * cfg.det_a.efficiency
        * cfg.det_b.efficiency
    )


def _branch_fraction(cfg: ExperimentConfig) -> float:
    return 0.5 * len(cfg.accepted_branches)


def _window_fraction(cfg: ExperimentConfig) -> float:
    # Fraction of signal coincidences with |t1 - t2| inside the window,
    # from the quadrature time-difference density.
    t_max = horizon(cfg)
    full = np.linspace(-t_max, t_max, 2001)
    dens = delta_t_density(cfg, full, mean_nodes=601)
    total = np.trapezoid(dens, full)
    if total <= 0.0:
        return 1.0
    w = min(cfg.coincidence_window, t_max)
    inside = np.linspace(-w, w, 2001)
    dens_in = delta_t_density(cfg, inside, mean_nodes=601)
    return float(np.trapezoid(dens_in, inside) / total)


def expected_event_rate(cfg: ExperimentConfig) -> float:
    """Accepted signal events per pulse, to first order in the pair
    probabilities (double emissions excluded)."""
    q_signal, _, _ = candidate_probabilities(cfg)
    return (
        q_signal
        * _acceptance_probability(cfg)
        * _branch_fraction(cfg)
        * _window_fraction(cfg)
    )


def pulses_for_events(cfg: ExperimentConfig, n_events: int, margin: float = 1.08) -> int:
    """Pulse count expected to yield at least n_events accepted signal
    events, with a small safety margin."""
    rate = expected_event_rate(cfg)
    if rate <= 0.0:
        raise ValueError("configuration has zero accepted-event rate")
    n = int(margin * n_events / rate) + 1
    return max(n, 1)


def _kernel_params(cfg: ExperimentConfig) -> tuple:
    fwd = cfg.feedforward
    setting = cfg.analyzer
    return kernels.pack_params(
        pump_width=cfg.pump.width,
        gamma_a=cfg.source_a.mode.gamma,
        gamma_b=cfg.source_b.mode.gamma,
        dw=cfg.delta_omega,
        sigma1=cfg.bsm_d1.jitter_sigma,
        sigma2=cfg.bsm_d2.jitter_sigma,
        accept_prob=_acceptance_probability(cfg),
        window=cfg.coincidence_window,
        ff_enabled=fwd.enabled,
        dw_set=fwd.delta_omega_setting,
        ff_shift=fwd.fixed_offset + fwd.delta_t,
        tac_range=fwd.tac_range,
        tac_res=fwd.tac_resolution,
        accept_plus=BsmBranch.PHI_PLUS in cfg.accepted_branches,
        accept_minus=BsmBranch.PHI_MINUS in cfg.accepted_branches,
        overlap=cfg.mode_overlap,
        circular=setting.circular,
        cos_a=math.cos(setting.angle_a),
        sin_a=math.sin(setting.angle_a),
        cos_b=math.cos(setting.angle_b),
        sin_b=math.sin(setting.angle_b),
    )


def _generate_chunk(
    chunk_index, n_chunk, seed, thresholds, params, kappa, kappa_step, backend
):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, chunk_index])))
    u_class = rng.random(n_chunk)
    q_sig, q_sig_a, q_all = thresholds
    positions = np.flatnonzero(u_class < q_all)
    u_cand = u_class[positions]
    kind = np.where(
        u_cand < q_sig,
        kernels.KIND_SIGNAL,
        np.where(u_cand < q_sig_a, kernels.KIND_DOUBLE_A, kernels.KIND_DOUBLE_B),
    ).astype(np.uint8)
    n_cand = len(positions)
    u = rng.random((n_cand, kernels.N_UNIFORMS))
    normals = rng.standard_normal((n_cand, kernels.N_NORMALS))
    outputs = kernels.allocate_outputs(n_cand)
    kernels.process_candidates(u, normals, kind, params, kappa, kappa_step, outputs, backend)
    keep, clipped, t1, t2, m1, m2, branch, phase, oa, ob = outputs
    sel = np.flatnonzero(keep)
    event_class = np.minimum(kind[sel], 1).astype(np.int8)
    return (
        positions[sel],
        t1[sel],
        t2[sel],
        m1[sel],
        m2[sel],
        branch[sel],
        event_class,
        phase[sel],
        oa[sel],
        ob[sel],
        int(np.count_nonzero(clipped)),
    )


def run_experiment(
    cfg: ExperimentConfig, n_pulses: int, seed: int, jobs: int = 1, backend=None
) -> EventLog:
    """Simulate n_pulses pump pulses and return the accepted events.

    Deterministic for fixed (cfg, n_pulses, seed) and any jobs value; the
    chunk partitioning is fixed, only its execution is parallel.
    """
    if not isinstance(n_pulses, (int, np.integer)) or isinstance(n_pulses, bool):
        raise ValueError(f"n_pulses must be an integer, got {n_pulses!r}")
    if n_pulses <= 0:
        raise ValueError(f"n_pulses must be at least 1, got {n_pulses}")
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise ValueError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    if jobs < 1:
        raise ValueError(f"jobs must be at least 1, got {jobs}")
    n_pulses = int(n_pulses)

    q_signal, q_double_a, q_double_b = candidate_probabilities(cfg)
    thresholds = (
        q_signal,
        q_signal + q_double_a,
        q_signal + q_double_a + q_double_b,
    )
    params = _kernel_params(cfg)
    table = coherence_table(cfg.pump, cfg.source_a.mode, cfg.source_b.mode, horizon(cfg))

    n_chunks = (n_pulses + CHUNK_PULSES - 1) // CHUNK_PULSES

    def generate(ci):
        n_chunk = min(CHUNK_PULSES, n_pulses - ci * CHUNK_PULSES)
        return _generate_chunk(
            ci, n_chunk, seed, thresholds, params, table.values, table.step, backend
        )

    if jobs == 1 or n_chunks == 1:
        chunks = [generate(ci) for ci in range(n_chunks)]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(generate, range(n_chunks)))

    offsets = [ci * CHUNK_PULSES for ci in range(n_chunks)]
    pulse_index = np.concatenate([pos + off for (pos, *_), off in zip(chunks, offsets)])
    fields = [np.concatenate([c[k] for c in chunks]) for k in range(1, 10)]
    n_clipped = sum(c[10] for c in chunks)
    return EventLog(
        pulse_index=pulse_index.astype(np.int64),
        true_t1=fields[0],
        true_t2=fields[1],
        measured_t1=fields[2],
        measured_t2=fields[3],
        branch=fields[4].astype(np.int8),
        event_class=fields[5].astype(np.int8),
        phase_applied=fields[6],
        outcome_a=fields[7].astype(np.int8),
        outcome_b=fields[8].astype(np.int8),
        config=cfg,
        seed=seed,
        n_pulses=n_pulses,
        n_clipped=n_clipped,
    )
