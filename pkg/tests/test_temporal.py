import math
from types import SimpleNamespace

import numpy as np
import pytest
from scipy.integrate import simpson

from colorswap.feedforward import FeedForwardConfig
from colorswap.polarization import bell_phi, correlator, trace_distance, witness
from colorswap.temporal import (
    BsmBranch,
    CoherenceTable,
    ModeParams,
    PumpParams,
    coherence_factor,
    coherence_table,
    conditional_swap_state,
    delta_omega,
    delta_t_density,
    horizon,
    joint_detection_density,
    mode_amplitude,
    pump_marginal_intensity,
    pump_pair_kernel,
    window_averaged_state,
)

TWO_PI = 2.0 * math.pi
GAMMA = TWO_PI * 5.6e6  # reference linewidth used across the suite


def make_config(
    gamma_a_hz=5.6e6,
    gamma_b_hz=5.6e6,
    offset_a_hz=0.0,
    offset_b_hz=0.0,
    pump_width=1e-12,
    window=300e-9,
    ff_enabled=False,
    delta_t=0.0,
    jitter_fwhm=0.0,
    mode_overlap=1.0,
    setting_hz=None,
):
    # duck-typed stand-in for the full experiment config
    mode_a = ModeParams(TWO_PI * gamma_a_hz, TWO_PI * offset_a_hz)
    mode_b = ModeParams(TWO_PI * gamma_b_hz, TWO_PI * offset_b_hz)
    setting = (
        delta_omega(mode_a, mode_b) if setting_hz is None else TWO_PI * setting_hz
    )
    sigma = jitter_fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    return SimpleNamespace(
        source_a=SimpleNamespace(mode=mode_a),
        source_b=SimpleNamespace(mode=mode_b),
        pump=PumpParams(pump_width),
        coincidence_window=window,
        feedforward=FeedForwardConfig(
            delta_omega_setting=setting, enabled=ff_enabled, delta_t=delta_t
        ),
        mode_overlap=mode_overlap,
        bsm_d1=SimpleNamespace(jitter_sigma=sigma),
        bsm_d2=SimpleNamespace(jitter_sigma=sigma),
    )


class TestModeAmplitude:
    def test_normalized_intensity(self):
        mode = ModeParams(GAMMA)
        t = np.linspace(0.0, 16.0 / GAMMA, 4001)
        norm = simpson(mode_amplitude(mode, t) ** 2, x=t)
        assert norm == pytest.approx(1.0, abs=1e-6)

    def test_zero_before_emission(self):
        mode = ModeParams(GAMMA)
        assert mode_amplitude(mode, 5e-9, emission_time=10e-9) == 0.0
        assert mode_amplitude(mode, 10e-9, emission_time=10e-9) > 0.0

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            ModeParams(0.0)
        with pytest.raises(ValueError):
            PumpParams(-1e-9)


class TestConditionalSwapState:
    def test_equal_linewidths_maximal_witness(self):
        mode = ModeParams(GAMMA)
        for t1, t2 in [(30e-9, 30e-9), (80e-9, 10e-9), (5e-9, 200e-9)]:
            rho = conditional_swap_state(t1, t2, mode, mode, BsmBranch.PHI_MINUS)
            assert witness(rho) == pytest.approx(-0.5, abs=1e-12)

    def test_branch_signs_differ_by_pi(self):
        mode = ModeParams(GAMMA)
        plus = conditional_swap_state(40e-9, 25e-9, mode, mode, BsmBranch.PHI_PLUS)
        minus = conditional_swap_state(40e-9, 25e-9, mode, mode, BsmBranch.PHI_MINUS)
        assert correlator(plus, "x") == pytest.approx(-correlator(minus, "x"), abs=1e-12)
        assert witness(plus) == pytest.approx(+0.5, abs=1e-12)

    def test_phase_pi_at_80mhz(self):
        # dw * dt = 2 pi * 80 MHz * 6.25 ns = pi flips the fringe sign
        mode_a = ModeParams(GAMMA, TWO_PI * 40e6)
        mode_b = ModeParams(GAMMA, TWO_PI * -40e6)
        t2 = 20e-9
        rho = conditional_swap_state(t2 + 6.25e-9, t2, mode_a, mode_b, BsmBranch.PHI_MINUS)
        assert correlator(rho, "x") == pytest.approx(-1.0, abs=1e-10)

    def test_linewidth_mismatch_amplitude_ratio(self):
        # gamma/2pi of 4.2 vs 5.6 MHz at dt = 50 ns: exponent is 0.07 pi
        mode_a = ModeParams(TWO_PI * 4.2e6)
        mode_b = ModeParams(TWO_PI * 5.6e6)
        rho = conditional_swap_state(60e-9, 10e-9, mode_a, mode_b, BsmBranch.PHI_MINUS)
        m = rho.matrix
        ratio = math.sqrt(m[3, 3].real / m[0, 0].real)
        assert ratio == pytest.approx(math.exp(0.07 * math.pi), rel=1e-9)
        assert ratio == pytest.approx(1.246, abs=1e-3)
        sech = 1.0 / math.cosh(0.07 * math.pi)
        assert abs(correlator(rho, "x")) == pytest.approx(sech, rel=1e-9)
        assert abs(correlator(rho, "x")) == pytest.approx(0.976297, abs=1e-5)

    def test_phase_linearity_in_time_difference(self):
        mode_a = ModeParams(TWO_PI * 4.2e6, TWO_PI * 20e6)
        mode_b = ModeParams(TWO_PI * 5.6e6, TWO_PI * -20e6)
        dw = delta_omega(mode_a, mode_b)
        rng = np.random.default_rng(5)
        for branch in BsmBranch:
            for _ in range(25):
                ta = rng.uniform(1e-9, 150e-9, 2)
                tb = rng.uniform(1e-9, 150e-9, 2)
                pa = np.angle(
                    conditional_swap_state(ta[0], ta[1], mode_a, mode_b, branch).matrix[3, 0]
                )
                pb = np.angle(
                    conditional_swap_state(tb[0], tb[1], mode_a, mode_b, branch).matrix[3, 0]
                )
                expected = dw * ((ta[0] - ta[1]) - (tb[0] - tb[1]))
                diff = (pa - pb) - expected
                assert abs(diff - TWO_PI * round(diff / TWO_PI)) < 1e-9

    def test_single_zero_amplitude_gives_product_state(self):
        mode = ModeParams(GAMMA)
        # photon at t1 = 5 ns cannot come from source a (emitted at 10 ns)
        rho = conditional_swap_state(
            5e-9, 30e-9, mode, mode, BsmBranch.PHI_MINUS,
            emission_time_a=10e-9, emission_time_b=0.0,
        )
        m = rho.matrix
        assert m[0, 0].real == pytest.approx(1.0, abs=1e-12)
        assert abs(m[0, 3]) == pytest.approx(0.0, abs=1e-12)

    def test_both_zero_amplitudes_rejected(self):
        mode = ModeParams(GAMMA)
        with pytest.raises(ValueError):
            conditional_swap_state(
                5e-9, 6e-9, mode, mode, BsmBranch.PHI_MINUS,
                emission_time_a=10e-9, emission_time_b=10e-9,
            )


class TestJointDetectionDensity:
    def test_zero_before_both_emissions(self):
        mode = ModeParams(GAMMA)
        val = joint_detection_density(
            5e-9, 4e-9, mode, mode, emission_time_a=6e-9, emission_time_b=7e-9
        )
        assert val == 0.0

    def test_equal_modes_closed_form(self):
        mode = ModeParams(GAMMA)
        rng = np.random.default_rng(9)
        t1 = rng.uniform(0.0, 100e-9, 40)
        t2 = rng.uniform(0.0, 100e-9, 40)
        got = joint_detection_density(t1, t2, mode, mode)
        expected = GAMMA**2 * np.exp(-GAMMA * (t1 + t2))
        assert np.allclose(got, expected, rtol=1e-12)

    def test_normalization(self):
        mode = ModeParams(GAMMA)
        t = np.linspace(0.0, 16.0 / GAMMA, 2001)
        grid = joint_detection_density(t[:, None], t[None, :], mode, mode)
        total = simpson(simpson(grid, x=t, axis=1), x=t)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_marginal_is_single_exponential(self):
        mode = ModeParams(GAMMA)
        t2 = np.linspace(0.0, 16.0 / GAMMA, 4001)
        for t1 in (3e-9, 20e-9, 60e-9):
            marginal = simpson(joint_detection_density(t1, t2, mode, mode), x=t2)
            assert marginal == pytest.approx(GAMMA * math.exp(-GAMMA * t1), rel=1e-5)

    def test_swap_symmetry(self):
        mode_a = ModeParams(TWO_PI * 4.2e6)
        mode_b = ModeParams(TWO_PI * 5.6e6)
        a = joint_detection_density(33e-9, 71e-9, mode_a, mode_b)
        b = joint_detection_density(71e-9, 33e-9, mode_b, mode_a)
        assert a == pytest.approx(b, rel=1e-12)


class TestPumpKernels:
    def test_marginal_matches_quadrature(self):
        # integrate over the exact emission support to avoid the step at e = t
        mode = ModeParams(GAMMA)
        pump = PumpParams(50e-9)
        for t in (3e-9, 30e-9, 49e-9, 80e-9, 200e-9):
            e = np.linspace(0.0, min(t, pump.width), 4001)
            direct = simpson(mode_amplitude(mode, t - e) ** 2, x=e) / pump.width
            assert pump_marginal_intensity(mode, pump, t) == pytest.approx(direct, rel=1e-6)

    def test_pair_kernel_matches_quadrature(self):
        mode = ModeParams(TWO_PI * 4.2e6)
        pump = PumpParams(50e-9)
        for t1, t2 in [(10e-9, 35e-9), (60e-9, 20e-9), (70e-9, 90e-9)]:
            e = np.linspace(0.0, min(t1, t2, pump.width), 4001)
            direct = simpson(
                mode_amplitude(mode, t1 - e) * mode_amplitude(mode, t2 - e), x=e
            ) / pump.width
            assert pump_pair_kernel(mode, pump, t1, t2) == pytest.approx(direct, rel=1e-6)

    def test_diagonal_reduces_to_marginal(self):
        mode = ModeParams(GAMMA)
        pump = PumpParams(300e-9)
        t = np.linspace(1e-9, 500e-9, 37)
        assert np.allclose(
            pump_pair_kernel(mode, pump, t, t),
            pump_marginal_intensity(mode, pump, t),
            rtol=1e-12,
        )

    def test_short_pump_limit(self):
        mode = ModeParams(GAMMA)
        pump = PumpParams(1e-12)
        for t in (5e-9, 40e-9, 150e-9):
            assert pump_marginal_intensity(mode, pump, t) == pytest.approx(
                GAMMA * math.exp(-GAMMA * t), rel=1e-3
            )

    def test_marginal_normalized(self):
        mode = ModeParams(GAMMA)
        pump = PumpParams(300e-9)
        t = np.linspace(0.0, pump.width + 16.0 / GAMMA, 6001)
        assert simpson(pump_marginal_intensity(mode, pump, t), x=t) == pytest.approx(
            1.0, abs=1e-6
        )


class TestCoherenceFactor:
    def test_equal_times_unity(self):
        pump = PumpParams(300e-9)
        mode = ModeParams(TWO_PI * 5e6)
        assert coherence_factor(40e-9, 40e-9, pump, mode, mode) == 1.0

    def test_short_pump_limit(self):
        pump = PumpParams(1e-12)
        mode = ModeParams(TWO_PI * 5e6)
        assert coherence_factor(170e-9, 20e-9, pump, mode, mode) == pytest.approx(
            1.0, abs=1e-3
        )

    def test_long_pump_below_short_pump(self):
        # frequency tagging strengthens with pump length at fixed separation
        mode = ModeParams(TWO_PI * 5e6)
        k_50 = coherence_factor(170e-9, 20e-9, PumpParams(50e-9), mode, mode)
        k_300 = coherence_factor(170e-9, 20e-9, PumpParams(300e-9), mode, mode)
        assert k_300 < k_50
        assert k_50 == pytest.approx(0.78584, abs=1e-3)
        assert k_300 == pytest.approx(0.10683, abs=1e-3)

    def test_monotone_in_time_difference(self):
        pump = PumpParams(300e-9)
        mode = ModeParams(TWO_PI * 5e6)
        values = [
            coherence_factor(150e-9 + 0.5 * d, 150e-9 - 0.5 * d, pump, mode, mode)
            for d in (0.0, 30e-9, 60e-9, 90e-9, 120e-9)
        ]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_monotone_in_pump_width(self):
        # kappa is 1 while the pump ends before both detections, falls while
        # the pulse straddles them, then saturates (emissions after detection
        # cannot contribute): non-increasing overall, strict in the middle
        mode = ModeParams(TWO_PI * 5e6)
        for d in (4e-9, 8e-9, 16e-9, 32e-9, 64e-9):
            values = [
                coherence_factor(100e-9 + 0.5 * d, 100e-9 - 0.5 * d, PumpParams(w), mode, mode)
                for w in (40e-9, 80e-9, 160e-9, 320e-9, 640e-9)
            ]
            assert all(a >= b - 2e-3 for a, b in zip(values, values[1:]))
            assert values[0] > values[2] + 1e-3

    def test_rejects_out_of_support_times(self):
        pump = PumpParams(50e-9)
        mode = ModeParams(TWO_PI * 5e6)
        with pytest.raises(ValueError):
            coherence_factor(-1e-9, 20e-9, pump, mode, mode)

    def test_rejects_under_resolved_grid(self):
        pump = PumpParams(300e-9)
        mode = ModeParams(TWO_PI * 5e6)
        with pytest.raises(ValueError):
            coherence_factor(40e-9, 20e-9, pump, mode, mode, nodes=129)


class TestCoherenceTable:
    def test_matches_pointwise_quadrature(self):
        mode_a = ModeParams(TWO_PI * 4.2e6)
        mode_b = ModeParams(TWO_PI * 5.6e6)
        pump = PumpParams(50e-9)
        t_max = pump.width + 12.0 / mode_a.gamma
        table = coherence_table(pump, mode_a, mode_b, t_max)
        rng = np.random.default_rng(7)
        for _ in range(5):
            t1 = float(rng.uniform(5e-9, 250e-9))
            t2 = float(rng.uniform(5e-9, 250e-9))
            pointwise = coherence_factor(t1, t2, pump, mode_a, mode_b)
            assert float(table.lookup(t1, t2)) == pytest.approx(pointwise, abs=2e-3)

    def test_matches_pointwise_long_pump(self):
        mode = ModeParams(TWO_PI * 5e6)
        pump = PumpParams(300e-9)
        t_max = pump.width + 12.0 / mode.gamma
        table = coherence_table(pump, mode, mode, t_max)
        for t1, t2 in [(170e-9, 20e-9), (250e-9, 180e-9)]:
            pointwise = coherence_factor(t1, t2, pump, mode, mode)
            assert float(table.lookup(t1, t2)) == pytest.approx(pointwise, abs=2e-3)

    def test_cached_instance_reused(self):
        mode = ModeParams(GAMMA)
        pump = PumpParams(50e-9)
        a = coherence_table(pump, mode, mode, 400e-9)
        b = coherence_table(pump, mode, mode, 400e-9)
        assert a is b

    def test_edge_clamp(self):
        mode = ModeParams(GAMMA)
        pump = PumpParams(50e-9)
        table = coherence_table(pump, mode, mode, 400e-9)
        inside = float(table.lookup(399.99e-9, 100e-9))
        beyond = float(table.lookup(500e-9, 100e-9))
        assert beyond == pytest.approx(inside, abs=5e-3)

    def test_values_within_unit_interval(self):
        mode = ModeParams(GAMMA)
        pump = PumpParams(300e-9)
        table = coherence_table(pump, mode, mode, 641e-9)
        assert table.values.min() >= 0.0
        assert table.values.max() <= 1.0 + 1e-12


class TestWindowAveragedState:
    def test_degenerate_sources_give_bell_state(self):
        rho = window_averaged_state(make_config())
        assert witness(rho) == pytest.approx(-0.5, abs=1e-3)
        assert trace_distance(rho, bell_phi(+1)) < 1e-3

    def test_beat_without_compensation_washes_out(self):
        cfg = make_config(offset_a_hz=20e6, offset_b_hz=-20e6)
        rho = window_averaged_state(cfg)
        w = witness(rho)
        assert abs(w) <= 0.01
        # residual fringe is the Lorentzian-tail average of cos(dw dt)
        dw = TWO_PI * 40e6
        residual = GAMMA**2 / (GAMMA**2 + dw**2)
        assert correlator(rho, "x") == pytest.approx(residual, abs=3e-4)

    def test_compensation_restores_witness(self):
        cfg = make_config(offset_a_hz=20e6, offset_b_hz=-20e6, ff_enabled=True)
        rho = window_averaged_state(cfg)
        assert witness(rho) == pytest.approx(-0.5, abs=1e-2)
        # remaining deficit is the clipped tail of the time-difference law
        dw = TWO_PI * 40e6
        p_lo = math.exp(-GAMMA * 150e-9)
        p_hi = math.exp(-GAMMA * 300e-9)
        clip_mass = (p_lo - p_hi) / (1.0 - p_hi)
        clip_mean = clip_mass * GAMMA**2 / (GAMMA**2 + dw**2)
        expected = (1.0 - clip_mass) + clip_mean
        assert correlator(rho, "x") == pytest.approx(expected, abs=3e-4)

    def test_narrow_window_approaches_equal_time_state(self):
        cfg = make_config(window=0.5e-9)
        rho = window_averaged_state(cfg)
        mode = cfg.source_a.mode
        target = conditional_swap_state(30e-9, 30e-9, mode, mode, BsmBranch.PHI_MINUS)
        assert trace_distance(rho, target) <= 1e-3

    def test_compensation_removes_time_difference_dependence(self):
        # per event: the compensated phase is flat across the unclipped range,
        # so every time difference yields the same witness
        from colorswap.feedforward import pockels_phase, tac_convert
        from colorswap.polarization import apply_phase_on_a

        cfg = make_config(offset_a_hz=20e6, offset_b_hz=-20e6, ff_enabled=True)
        mode_a, mode_b = cfg.source_a.mode, cfg.source_b.mode
        values = []
        for dt in np.linspace(-149e-9, 149e-9, 31):
            t2 = 200e-9
            raw = conditional_swap_state(t2 + dt, t2, mode_a, mode_b, BsmBranch.PHI_MINUS)
            phi = pockels_phase(tac_convert(dt, cfg.feedforward), cfg.feedforward)
            values.append(witness(apply_phase_on_a(raw, phi)))
        assert max(values) - min(values) < 1e-9
        assert values[0] == pytest.approx(-0.5, abs=1e-9)

    def test_compensated_witness_window_spread_small(self):
        # oracle-level version of the same statement, quadrature-limited
        cfg = make_config(offset_a_hz=20e6, offset_b_hz=-20e6, ff_enabled=True)
        values = [
            witness(window_averaged_state(cfg, window=w))
            for w in (20e-9, 100e-9, 150e-9)
        ]
        assert max(values) - min(values) < 5e-5

    def test_jitter_dephases_by_gaussian_factor(self):
        base = make_config(offset_a_hz=20e6, offset_b_hz=-20e6, ff_enabled=True)
        jittered = make_config(
            offset_a_hz=20e6, offset_b_hz=-20e6, ff_enabled=True, jitter_fwhm=350e-12
        )
        cx_clean = correlator(window_averaged_state(base), "x")
        cx_jitter = correlator(window_averaged_state(jittered), "x")
        sigma_c = math.sqrt(2.0) * 350e-12 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        expected = math.exp(-0.5 * (TWO_PI * 40e6 * sigma_c) ** 2)
        assert cx_jitter / cx_clean == pytest.approx(expected, abs=2e-4)

    def test_mode_overlap_scales_coherence_linearly(self):
        full = window_averaged_state(make_config())
        half = window_averaged_state(make_config(mode_overlap=0.5))
        assert correlator(half, "x") == pytest.approx(
            0.5 * correlator(full, "x"), rel=1e-9
        )

    def test_long_pump_realistic_state_is_valid(self):
        cfg = make_config(
            gamma_a_hz=4.2e6,
            gamma_b_hz=5.6e6,
            offset_a_hz=20e6,
            offset_b_hz=-20e6,
            pump_width=50e-9,
            ff_enabled=True,
            jitter_fwhm=350e-12,
            mode_overlap=0.97,
        )
        rho = window_averaged_state(cfg)
        assert correlator(rho, "z") == pytest.approx(1.0, abs=1e-9)
        assert witness(rho) == pytest.approx(-0.290, abs=5e-3)

    def test_rejects_non_positive_window(self):
        with pytest.raises(ValueError):
            window_averaged_state(make_config(), window=0.0)


class TestDeltaTDensity:
    def test_clip_mass_matches_laplace_form(self):
        # equal linewidths, short pump: |t1 - t2| follows a Laplace law
        cfg = make_config()
        deltas = np.linspace(-300e-9, 300e-9, 12001)
        density = delta_t_density(cfg, deltas)
        density /= simpson(density, x=deltas)
        outside = np.abs(deltas) > 150e-9
        clip = simpson(np.where(outside, density, 0.0), x=deltas)
        p_lo = math.exp(-GAMMA * 150e-9)
        p_hi = math.exp(-GAMMA * 300e-9)
        assert clip == pytest.approx((p_lo - p_hi) / (1.0 - p_hi), rel=2e-3)

    def test_horizon_covers_decay(self):
        cfg = make_config(pump_width=300e-9)
        assert horizon(cfg) == pytest.approx(300e-9 + 12.0 / GAMMA, rel=1e-12)
