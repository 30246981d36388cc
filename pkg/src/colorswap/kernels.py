"""Per-candidate event pipeline behind the Monte Carlo engine.

Two interchangeable implementations of the same math: a scalar loop
compiled with numba, and a vectorized numpy fallback.  Both consume the
same pre-drawn random arrays, so for a fixed seed they produce the same
event log.  Selection is automatic (numba when importable) and can be
forced to the fallback by setting COLORSWAP_NO_NUMBA in the environment.

Randomness never happens in here.  The engine draws one uniform per pulse
to classify candidates, then a fixed block of eight uniforms and two
normals per candidate, and the kernel turns those blocks into accepted
events.  Keeping the draw schema fixed is what makes the two backends and
any partitioning of the pulse stream agree bit for bit.
"""

from __future__ import annotations

import math
import os

import numpy as np

# Uniform column layout per candidate.
_U_EMIT_A = 0
_U_EMIT_B = 1
_U_PAIRING = 2
_U_DECAY_1 = 3
_U_DECAY_2 = 4
_U_ACCEPT = 5
_U_BRANCH = 6
_U_OUTCOME = 7
N_UNIFORMS = 8
N_NORMALS = 2

# Candidate kinds.
KIND_SIGNAL = 0
KIND_DOUBLE_A = 1
KIND_DOUBLE_B = 2

# Amplitude-ratio log cap; beyond this the coherence is below 1e-13 and
# tanh/cosh saturate cleanly.
_LR_CAP = 30.0


def _candidate_loop(
    u,
    normals,
    kind,
    pump_width,
    gamma_a,
    gamma_b,
    dw,
    sigma1,
    sigma2,
    accept_prob,
    window,
    ff_enabled,
    dw_set,
    ff_shift,
    tac_range,
    tac_res,
    accept_plus,
    accept_minus,
    overlap,
    circular,
    cos_a,
    sin_a,
    cos_b,
    sin_b,
    kappa,
    kappa_step,
    keep,
    clipped,
    true_t1,
    true_t2,
    meas_t1,
    meas_t2,
    branch,
    phase,
    outcome_a,
    outcome_b,
):
    n = u.shape[0]
    n_grid = kappa.shape[0]
    grid_hi = n_grid - 1.000001
    for i in range(n):
        keep[i] = False
        clipped[i] = False
        k = kind[i]
        ea = u[i, _U_EMIT_A] * pump_width
        eb = u[i, _U_EMIT_B] * pump_width
        if k == KIND_SIGNAL:
            # The joint arrival density is an even mixture of the two
            # pairings of source photon to BSM detector.
            if u[i, _U_PAIRING] < 0.5:
                t1 = eb - math.log1p(-u[i, _U_DECAY_1]) / gamma_b
                t2 = ea - math.log1p(-u[i, _U_DECAY_2]) / gamma_a
            else:
                t1 = ea - math.log1p(-u[i, _U_DECAY_1]) / gamma_a
                t2 = eb - math.log1p(-u[i, _U_DECAY_2]) / gamma_b
        else:
            g = gamma_a if k == KIND_DOUBLE_A else gamma_b
            t1 = ea - math.log1p(-u[i, _U_DECAY_1]) / g
            t2 = eb - math.log1p(-u[i, _U_DECAY_2]) / g
        m1 = t1 + sigma1 * normals[i, 0]
        m2 = t2 + sigma2 * normals[i, 1]
        if u[i, _U_ACCEPT] >= accept_prob:
            continue
        dtm = m1 - m2
        if abs(dtm) > window:
            continue
        if u[i, _U_BRANCH] < 0.5:
            b = 0
            if not accept_plus:
                continue
        else:
            b = 1
            if not accept_minus:
                continue
        phi_p = 0.0
        clip_i = False
        if ff_enabled:
            tac_in = dtm + ff_shift
            tac_out = tac_in
            if tac_in < 0.0:
                tac_out = 0.0
                clip_i = True
            elif tac_in > tac_range:
                tac_out = tac_range
                clip_i = True
            if tac_res > 0.0:
                tac_out = math.floor(tac_out / tac_res + 0.5) * tac_res
                cap = math.floor(tac_range / tac_res) * tac_res
                if tac_out > cap:
                    tac_out = cap
            phi_p = dw_set * (2.0 * ff_shift - tac_out)
        dt_true = t1 - t2
        if k == KIND_SIGNAL:
            hh = (t1 > eb) and (t2 > ea)
            vv = (t1 > ea) and (t2 > eb)
            if hh and vv:
                lr = 0.5 * (gamma_b - gamma_a) * dt_true
                if lr > _LR_CAP:
                    lr = _LR_CAP
                elif lr < -_LR_CAP:
                    lr = -_LR_CAP
                th = math.tanh(lr)
                a2 = 0.5 * (1.0 - th)
                b2 = 0.5 * (1.0 + th)
                x = t1 / kappa_step
                if x < 0.0:
                    x = 0.0
                elif x > grid_hi:
                    x = grid_hi
                y = t2 / kappa_step
                if y < 0.0:
                    y = 0.0
                elif y > grid_hi:
                    y = grid_hi
                ix = int(x)
                iy = int(y)
                fx = x - ix
                fy = y - iy
                kap = (
                    kappa[ix, iy] * (1 - fx) * (1 - fy)
                    + kappa[ix + 1, iy] * fx * (1 - fy)
                    + kappa[ix, iy + 1] * (1 - fx) * fy
                    + kappa[ix + 1, iy + 1] * fx * fy
                )
                theta = dw * dt_true + phi_p
                rec = (0.5 / math.cosh(lr)) * overlap * kap * math.cos(theta)
            elif hh:
                a2 = 1.0
                b2 = 0.0
                rec = 0.0
            else:
                a2 = 0.0
                b2 = 1.0
                rec = 0.0
            if circular:
                p0 = 0.25 - 0.5 * rec
                p1 = 0.25 + 0.5 * rec
                p2 = 0.25 + 0.5 * rec
            else:
                w0 = cos_a * cos_b
                w1 = sin_a * sin_b
                p0 = a2 * w0 * w0 + b2 * w1 * w1 + 2.0 * w0 * w1 * rec
                w0 = -cos_a * sin_b
                w1 = sin_a * cos_b
                p1 = a2 * w0 * w0 + b2 * w1 * w1 + 2.0 * w0 * w1 * rec
                w0 = -sin_a * cos_b
                w1 = cos_a * sin_b
                p2 = a2 * w0 * w0 + b2 * w1 * w1 + 2.0 * w0 * w1 * rec
        else:
            p0 = 0.25
            p1 = 0.25
            p2 = 0.25
        r = u[i, _U_OUTCOME]
        if r < p0:
            oa = 1
            ob = 1
        elif r < p0 + p1:
            oa = 1
            ob = -1
        elif r < p0 + p1 + p2:
            oa = -1
            ob = 1
        else:
            oa = -1
            ob = -1
        keep[i] = True
        clipped[i] = clip_i
        true_t1[i] = t1
        true_t2[i] = t2
        meas_t1[i] = m1
        meas_t2[i] = m2
        branch[i] = b
        phase[i] = phi_p
        outcome_a[i] = oa
        outcome_b[i] = ob


def swap_state_weights(lr):
    """HH and VV populations and the bare coherence magnitude for an
    amplitude-ratio log lr = (gamma_b - gamma_a) * dt / 2, computed in the
    saturation-safe form the kernels use."""
    lr = np.clip(np.asarray(lr, dtype=float), -_LR_CAP, _LR_CAP)
    th = np.tanh(lr)
    return 0.5 * (1.0 - th), 0.5 * (1.0 + th), 0.5 / np.cosh(lr)


def analyzer_probabilities(a2, b2, rec, circular, cos_a, sin_a, cos_b, sin_b):
    """Outcome distribution over ((+,+), (+,-), (-,+), (-,-)) for the
    rank-2 swap state diag(a2, 0, 0, b2) with Re<HH|rho|VV> = rec.

    Only the real part of the coherence enters for linear analyzers at
    real angles and for the circular setting, which is all the event
    engine supports.
    """
    a2 = np.asarray(a2, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    rec = np.asarray(rec, dtype=float)
    if circular:
        p0 = 0.25 - 0.5 * rec
        p1 = 0.25 + 0.5 * rec
        p2 = 0.25 + 0.5 * rec
        p0 = p0 + 0.0 * a2
        p1 = p1 + 0.0 * a2
        p2 = p2 + 0.0 * a2
    else:
        w0 = cos_a * cos_b
        w1 = sin_a * sin_b
        p0 = a2 * w0 * w0 + b2 * w1 * w1 + 2.0 * w0 * w1 * rec
        w0 = -cos_a * sin_b
        w1 = sin_a * cos_b
        p1 = a2 * w0 * w0 + b2 * w1 * w1 + 2.0 * w0 * w1 * rec
        w0 = -sin_a * cos_b
        w1 = cos_a * sin_b
        p2 = a2 * w0 * w0 + b2 * w1 * w1 + 2.0 * w0 * w1 * rec
    p3 = 1.0 - (p0 + p1 + p2)
    return np.stack(np.broadcast_arrays(p0, p1, p2, p3))


def _bilinear(kappa, kappa_step, t1, t2):
    n_grid = kappa.shape[0]
    grid_hi = n_grid - 1.000001
    x = np.clip(t1 / kappa_step, 0.0, grid_hi)
    y = np.clip(t2 / kappa_step, 0.0, grid_hi)
    i = x.astype(np.int64)
    j = y.astype(np.int64)
    fx = x - i
    fy = y - j
    return (
        kappa[i, j] * (1 - fx) * (1 - fy)
        + kappa[i + 1, j] * fx * (1 - fy)
        + kappa[i, j + 1] * (1 - fx) * fy
        + kappa[i + 1, j + 1] * fx * fy
    )


def _candidate_vector(
    u,
    normals,
    kind,
    pump_width,
    gamma_a,
    gamma_b,
    dw,
    sigma1,
    sigma2,
    accept_prob,
    window,
    ff_enabled,
    dw_set,
    ff_shift,
    tac_range,
    tac_res,
    accept_plus,
    accept_minus,
    overlap,
    circular,
    cos_a,
    sin_a,
    cos_b,
    sin_b,
    kappa,
    kappa_step,
    keep,
    clipped,
    true_t1,
    true_t2,
    meas_t1,
    meas_t2,
    branch,
    phase,
    outcome_a,
    outcome_b,
):
    n = u.shape[0]
    if n == 0:
        return
    is_signal = kind == KIND_SIGNAL
    ea = u[:, _U_EMIT_A] * pump_width
    eb = u[:, _U_EMIT_B] * pump_width

    # Envelope start time and decay rate feeding each BSM detector.
    g1 = np.where(kind == KIND_DOUBLE_B, gamma_b, gamma_a)
    e1 = ea.copy()
    g2 = g1.copy()
    e2 = eb.copy()
    hh_pairing = is_signal & (u[:, _U_PAIRING] < 0.5)
    vv_pairing = is_signal & ~hh_pairing
    g1[hh_pairing] = gamma_b
    e1[hh_pairing] = eb[hh_pairing]
    g2[hh_pairing] = gamma_a
    e2[hh_pairing] = ea[hh_pairing]
    g1[vv_pairing] = gamma_a
    e1[vv_pairing] = ea[vv_pairing]
    g2[vv_pairing] = gamma_b
    e2[vv_pairing] = eb[vv_pairing]

    t1 = e1 - np.log1p(-u[:, _U_DECAY_1]) / g1
    t2 = e2 - np.log1p(-u[:, _U_DECAY_2]) / g2
    m1 = t1 + sigma1 * normals[:, 0]
    m2 = t2 + sigma2 * normals[:, 1]
    dtm = m1 - m2

    b = (u[:, _U_BRANCH] >= 0.5).astype(np.int8)
    ok = u[:, _U_ACCEPT] < accept_prob
    ok &= np.abs(dtm) <= window
    if not accept_plus:
        ok &= b != 0
    if not accept_minus:
        ok &= b != 1

    phi_p = np.zeros(n)
    clip_mask = np.zeros(n, dtype=bool)
    if ff_enabled:
        tac_in = dtm + ff_shift
        clip_mask = (tac_in < 0.0) | (tac_in > tac_range)
        tac_out = np.clip(tac_in, 0.0, tac_range)
        if tac_res > 0.0:
            tac_out = np.floor(tac_out / tac_res + 0.5) * tac_res
            cap = np.floor(tac_range / tac_res) * tac_res
            tac_out = np.minimum(tac_out, cap)
        phi_p = dw_set * (2.0 * ff_shift - tac_out)

    dt_true = t1 - t2
    hh = (t1 > eb) & (t2 > ea)
    vv = (t1 > ea) & (t2 > eb)
    both = hh & vv

    lr = np.clip(0.5 * (gamma_b - gamma_a) * dt_true, -_LR_CAP, _LR_CAP)
    th = np.tanh(lr)
    a2 = np.where(both, 0.5 * (1.0 - th), np.where(hh, 1.0, 0.0))
    b2 = 1.0 - a2
    theta = dw * dt_true + phi_p
    kap = _bilinear(kappa, kappa_step, t1, t2)
    rec = np.where(both, (0.5 / np.cosh(lr)) * overlap * kap * np.cos(theta), 0.0)
    # Double emissions carry no polarization correlation at all.
    a2 = np.where(is_signal, a2, 0.5)
    b2 = np.where(is_signal, b2, 0.5)
    rec = np.where(is_signal, rec, 0.0)

    if circular:
        p0 = 0.25 - 0.5 * rec
        p1 = 0.25 + 0.5 * rec
        p2 = 0.25 + 0.5 * rec
    else:
        w0 = cos_a * cos_b
        w1 = sin_a * sin_b
        p0 = a2 * w0 * w0 + b2 * w1 * w1 + 2.0 * w0 * w1 * rec
        w0 = -cos_a * sin_b
        w1 = sin_a * cos_b
        p1 = a2 * w0 * w0 + b2 * w1 * w1 + 2.0 * w0 * w1 * rec
        w0 = -sin_a * cos_b
        w1 = cos_a * sin_b
        p2 = a2 * w0 * w0 + b2 * w1 * w1 + 2.0 * w0 * w1 * rec
    r = u[:, _U_OUTCOME]
    c1 = p0
    c2 = p0 + p1
    c3 = c2 + p2
    oa = np.where(r < c2, 1, -1).astype(np.int8)
    ob = np.where(r < c1, 1, np.where(r < c2, -1, np.where(r < c3, 1, -1))).astype(np.int8)

    keep[:] = ok
    clipped[:] = clip_mask & ok
    true_t1[:] = t1
    true_t2[:] = t2
    meas_t1[:] = m1
    meas_t2[:] = m2
    branch[:] = b
    phase[:] = phi_p
    outcome_a[:] = oa
    outcome_b[:] = ob


def _pick_backend() -> str:
    if os.environ.get("COLORSWAP_NO_NUMBA"):
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        return "numpy"
    return "numba"


_BACKEND = _pick_backend()

if _BACKEND == "numba":
    from numba import njit

    _candidate_loop_compiled = njit(cache=True, nogil=True)(_candidate_loop)
    _IMPLEMENTATIONS = {
        "numba": _candidate_loop_compiled,
        "numpy": _candidate_vector,
    }
else:
    _IMPLEMENTATIONS = {"numpy": _candidate_vector}


def active_backend() -> str:
    return _BACKEND


def pack_params(
    *,
    pump_width,
    gamma_a,
    gamma_b,
    dw,
    sigma1,
    sigma2,
    accept_prob,
    window,
    ff_enabled,
    dw_set,
    ff_shift,
    tac_range,
    tac_res,
    accept_plus,
    accept_minus,
    overlap,
    circular,
    cos_a,
    sin_a,
    cos_b,
    sin_b,
):
    """Positional parameter tuple in the exact order the kernels take."""
    return (
        float(pump_width),
        float(gamma_a),
        float(gamma_b),
        float(dw),
        float(sigma1),
        float(sigma2),
        float(accept_prob),
        float(window),
        bool(ff_enabled),
        float(dw_set),
        float(ff_shift),
        float(tac_range),
        float(tac_res),
        bool(accept_plus),
        bool(accept_minus),
        float(overlap),
        bool(circular),
        float(cos_a),
        float(sin_a),
        float(cos_b),
        float(sin_b),
    )


def allocate_outputs(n: int) -> tuple:
    return (
        np.zeros(n, dtype=bool),
        np.zeros(n, dtype=bool),
        np.empty(n),
        np.empty(n),
        np.empty(n),
        np.empty(n),
        np.empty(n, dtype=np.int8),
        np.empty(n),
        np.empty(n, dtype=np.int8),
        np.empty(n, dtype=np.int8),
    )


def process_candidates(u, normals, kind, params, kappa, kappa_step, outputs, backend=None):
    """Run one candidate block through the selected backend, filling the
    output arrays from allocate_outputs in place."""
    name = backend or _BACKEND
    try:
        impl = _IMPLEMENTATIONS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} is not available in this process") from None
    impl(u, normals, kind, *params, kappa, float(kappa_step), *outputs)
