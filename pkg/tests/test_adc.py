import io
import math

import numpy as np
import pytest

from sarsizer.adc import (
    AdcConfig,
    DesignPoint,
    build_model,
    conversion_energy,
    convert,
    convert_batch,
    sample_input,
    trace_csv_string,
)
from sarsizer.errors import BoundsError
from sarsizer.rng import conversion_noise

from conftest import binary_search_oracle, ideal_design, ideal_quantizer, sane_design

BOLTZMANN = 1.380649e-23


def design_with(**overrides):
    base = sane_design().to_dict()
    base.update(overrides)
    return DesignPoint(**base)


class TestBuildModel:
    def test_total_capacitance(self):
        cfg = AdcConfig(n_bits=12, f_s=1e6, v_dd=1.0)
        m = build_model(design_with(c_unit=1e-15), cfg)
        assert m.c_tot == 2**11 * 1e-15

    def test_driver_resistance_doubles_per_bit(self):
        cfg = AdcConfig(n_bits=8, f_s=1e6, v_dd=1.0)
        m = build_model(design_with(r_drv_msb=1e3), cfg)
        # halved driver strength per bit: resistance doubles
        assert m.r_drv[2] == 1e3 * 2**2 == 4e3

    def test_driver_resistance_capped(self):
        cfg = AdcConfig(n_bits=12, f_s=1e6, v_dd=1.0, r_drv_cap=8e3)
        m = build_model(design_with(r_drv_msb=1e3), cfg)
        assert m.r_drv.max() == 8e3
        # settling constants nondecreasing, flat once the cap engages
        assert np.all(np.diff(m.tau_step) >= 0)

    def test_binary_step_amplitudes(self):
        cfg = AdcConfig(n_bits=4, f_s=1e6, v_dd=2.0)
        m = build_model(ideal_design(), cfg)
        np.testing.assert_array_equal(m.step_amp, [1.0, 0.5, 0.25, 0.125])
        np.testing.assert_array_equal(m.step_amp[:-1] / m.step_amp[1:], 2.0)

    def test_bounds_error_names_field(self):
        cfg = AdcConfig(n_bits=8, f_s=1e6, v_dd=1.0)
        bounds = {"r_sw": (100.0, 1e3)}
        with pytest.raises(BoundsError, match="r_sw"):
            build_model(design_with(r_sw=5e3), cfg, bounds)

    def test_nonpositive_field_rejected(self):
        with pytest.raises(BoundsError, match="sigma_cmp"):
            design_with(sigma_cmp=0.0).validate()


class TestSampleInput:
    def test_zero_switch_resistance_is_exact(self):
        cfg = AdcConfig(n_bits=8, f_s=1e6, v_dd=1.0)
        m = build_model(ideal_design(), cfg)
        for v in (-0.3, 0.0, 0.44):
            assert sample_input(m, v) == v

    def test_rc_settling_matches_analytic(self):
        # c_tot = 2 pF via c_unit, r_sw = 1 kOhm, 10 ns window: 5 time constants
        cfg = AdcConfig(n_bits=12, f_s=1e6, v_dd=1.2)
        m = build_model(
            design_with(c_unit=2e-12 / 2**11, r_sw=1e3, t_sample=10e-9), cfg
        )
        sampled = sample_input(m, 1.0, v_prev=0.0)
        assert m.tau_smp == pytest.approx(2e-9, rel=1e-12)
        error = 1.0 - sampled
        assert error == pytest.approx(math.exp(-5.0), rel=1e-12)
        assert sampled == pytest.approx(0.99326, abs=5e-6)

    def test_kt_c_noise_std(self):
        cfg = AdcConfig(n_bits=12, f_s=1e6, v_dd=1.0, temp_k=300.0)
        m = build_model(design_with(c_unit=1e-12 / 2**11, r_sw=1e-30), cfg)
        draws = np.array(
            [sample_input(m, 0.0, rng_key=(11, i)) for i in range(100_000)]
        )
        expected = math.sqrt(2 * BOLTZMANN * 300.0 / 1e-12)
        assert expected == pytest.approx(91.0e-6, abs=0.1e-6)
        assert draws.std() == pytest.approx(expected, rel=0.02)

    def test_previous_sample_memory(self):
        cfg = AdcConfig(n_bits=8, f_s=1e6, v_dd=1.0)
        m = build_model(design_with(r_sw=2e3, t_sample=1e-9), cfg)
        a = sample_input(m, 0.4, v_prev=0.0)
        b = sample_input(m, 0.4, v_prev=-0.4)
        assert a != b
        # same v_prev restores exact reproducibility
        assert sample_input(m, 0.4, v_prev=-0.4) == b


class TestConvert:
    def test_midscale_ties_high(self):
        cfg = AdcConfig(n_bits=4, f_s=1e6, v_dd=2.0)
        m = build_model(ideal_design(), cfg)
        assert convert(m, 0.0).code == 8

    def test_binary_search_oracle_value(self):
        cfg = AdcConfig(n_bits=4, f_s=1e6, v_dd=2.0)
        m = build_model(ideal_design(), cfg)
        v = 0.3 * 2.0
        assert binary_search_oracle(v, 4, 2.0) == 12
        assert convert(m, v).code == 12

    @pytest.mark.parametrize("n", [4, 6, 8, 10])
    def test_ideal_limit_matches_quantizer_exhaustively(self, n):
        cfg = AdcConfig(n_bits=n, f_s=1e6, v_dd=1.0)
        m = build_model(ideal_design(), cfg)
        # hit every code plus both overrange sides and exact boundaries
        grid = np.linspace(-0.6, 0.6, 2**n * 4 + 1)
        got = np.array([convert(m, float(v)).code for v in grid])
        np.testing.assert_array_equal(got, ideal_quantizer(grid, n, 1.0))

    def test_overrange_clips_to_extremes(self):
        cfg = AdcConfig(n_bits=8, f_s=1e6, v_dd=1.0)
        m = build_model(ideal_design(), cfg)
        assert convert(m, 5.0).code == 255
        assert convert(m, -5.0).code == 0

    def test_monotone_in_input_without_noise(self, sane_model_12):
        grid = np.linspace(-0.55, 0.55, 2**12)
        codes, _ = convert_batch(sane_model_12, grid, seed=None)
        assert np.all(np.diff(codes) >= 0)

    def test_ideal_steps_ratio_exact(self, ideal_model_12):
        trace = convert(ideal_model_12, ideal_model_12.cfg.v_dd)
        np.testing.assert_array_equal(
            trace.applied_step[:-1] / trace.applied_step[1:], 2.0
        )

    def test_timing_failure_zeroes_trailing_bits(self):
        # decisions at half supply stay metastable long enough to blow the
        # conversion period
        cfg = AdcConfig(n_bits=10, f_s=20e6, v_dd=1.0)
        m = build_model(design_with(t_d0=4e-9, tau_reg=2e-9, t_dff=4e-9), cfg)
        trace = convert(m, 1e-7)
        assert not trace.timing_ok
        assert trace.n_fired < 10
        assert np.all(trace.bits[trace.n_fired:] == 0)
        assert np.all(trace.t_bit[trace.n_fired:] == 0.0)

    def test_time_accounting_identity(self, sane_model_12):
        trace = convert(sane_model_12, 0.21)
        assert trace.t_total == sane_model_12.design.t_sample + trace.t_bit.sum()
        if trace.timing_ok:
            assert trace.t_total <= sane_model_12.cfg.t_conv

    def test_determinism_bit_identical(self, sane_model_12):
        a = convert(sane_model_12, 0.123, rng_key=(5, 77))
        b = convert(sane_model_12, 0.123, rng_key=(5, 77))
        assert a.code == b.code
        np.testing.assert_array_equal(a.applied_step, b.applied_step)
        np.testing.assert_array_equal(a.t_bit, b.t_bit)
        np.testing.assert_array_equal(a.delta_q, b.delta_q)
        assert a.e_total == b.e_total

    def test_different_key_changes_noise(self, sane_model_12):
        vals = {convert(sane_model_12, 0.123, rng_key=(5, i)).code for i in range(20)}
        assert len(vals) > 1

    def test_batch_matches_scalar_path(self, sane_model_12):
        grid = np.linspace(-0.4, 0.4, 257)
        batch_codes, batch_ok = convert_batch(sane_model_12, grid, seed=3)
        scalar = [
            convert(sane_model_12, float(v), rng_key=(3, i)) for i, v in enumerate(grid)
        ]
        np.testing.assert_array_equal(batch_codes, [t.code for t in scalar])
        np.testing.assert_array_equal(batch_ok, [t.timing_ok for t in scalar])


def charge_oracle(model, bits):
    """Independent supply-charge bookkeeping from absolute node voltages.

    Tracks every capacitor's bottom-plate potential and the top-plate
    shift per side; the supply charge of an event is the change of
    (v_bottom - v_top) summed over supply-connected capacitors, plus the
    hookup charge of the newly connected one.
    """
    n = model.cfg.n_bits
    v_dd = model.cfg.v_dd
    v_cm = v_dd / 2.0
    c_unit = model.design.c_unit
    caps = [2 ** (n - 1 - j) * c_unit for j in range(1, n)]  # event j-1 switches caps[j-1]
    c_tot = 2 ** (n - 1) * c_unit

    events = []
    for side_sign in (+1, -1):  # +1: p side, -1: n side
        vb = [v_cm] * len(caps)
        vt = 0.0
        side_events = []
        for j, bit in enumerate(bits[: n - 1]):
            # p side goes down when the bit is 1; n side mirrors
            goes_up = (bit == 0) if side_sign == 1 else (bit == 1)
            new_vb = v_dd if goes_up else 0.0
            dvb = new_vb - vb[j]
            vt_new = vt + dvb * caps[j] / c_tot
            dq = 0.0
            for k in range(len(caps)):
                if k == j:
                    if new_vb == v_dd:
                        dq += caps[k] * ((new_vb - vt_new) - (v_cm - vt))
                elif vb[k] == v_dd:
                    dq += caps[k] * ((v_dd - vt_new) - (v_dd - vt))
            vb[j] = new_vb
            vt = vt_new
            side_events.append(dq)
        events.append(side_events)
    return np.array(events[0]) + np.array(events[1])


class TestEnergy:
    def cfg(self, **kw):
        defaults = dict(n_bits=4, f_s=1e6, v_dd=1.0)
        defaults.update(kw)
        return AdcConfig(**defaults)

    def test_dac_only_when_coefficients_zero(self):
        m = build_model(ideal_design(), self.cfg())
        trace = convert(m, 0.2)
        assert trace.e_total == m.cfg.v_dd * trace.delta_q.sum()

    def test_comparator_term_scales_inverse_square(self):
        base = design_with(sigma_cmp=2e-4)
        halved = design_with(sigma_cmp=1e-4)
        cfg = self.cfg(kappa_cmp=1e-24)
        t1 = convert(build_model(base, cfg), 0.2)
        t2 = convert(build_model(halved, cfg), 0.2)
        term1 = cfg.kappa_cmp / base.sigma_cmp**2 * t1.n_fired
        term2 = cfg.kappa_cmp / halved.sigma_cmp**2 * t2.n_fired
        assert term2 == pytest.approx(4.0 * term1, rel=1e-12)
        assert t2.e_total - t2.delta_q.sum() * cfg.v_dd - term2 == pytest.approx(
            t1.e_total - t1.delta_q.sum() * cfg.v_dd - term1, rel=1e-12
        )

    def test_hand_tracked_midscale_charges(self):
        # four-bit conversion of v = 0 (code 1000): hand-tracked supply
        # charges per event with 1 fF unit and 1 V supply
        m = build_model(ideal_design(), self.cfg())
        assert m.design.c_unit == 1e-15
        trace = convert(m, 0.0)
        assert trace.code == 8
        np.testing.assert_allclose(
            trace.delta_q[:3], [1.0e-15, 1.25e-15, 0.5625e-15], rtol=1e-12
        )
        assert trace.e_total == pytest.approx(2.8125e-15, rel=1e-12)

    @pytest.mark.parametrize("v", [-0.37, -0.125, 0.0, 0.2, 0.49])
    def test_charge_conservation_oracle(self, v):
        cfg = AdcConfig(n_bits=8, f_s=1e6, v_dd=1.0)
        m = build_model(sane_design(), cfg)
        trace = convert(m, v)
        oracle = charge_oracle(m, trace.bits)
        np.testing.assert_allclose(trace.delta_q[:-1], oracle, rtol=1e-12)
        assert conversion_energy(trace, m) == trace.e_total

    def test_energy_nonnegative_and_additive(self):
        cfg = self.cfg(kappa_cmp=1e-25, kappa_sw=1e-13, e_dff=1e-15)
        m = build_model(sane_design(), cfg)
        trace = convert(m, -0.11)
        e_dac = cfg.v_dd * trace.delta_q.sum()
        e_cmp = cfg.kappa_cmp / m.design.sigma_cmp**2 * trace.n_fired
        e_logic = cfg.e_dff * trace.n_fired
        e_sw = cfg.kappa_sw / m.design.r_sw
        assert min(e_dac, e_cmp, e_logic, e_sw) >= 0.0
        assert trace.e_total == pytest.approx(e_dac + e_cmp + e_logic + e_sw, rel=1e-12)


class TestTraceExport:
    def test_csv_round_trip_full_precision(self, sane_model_12):
        trace = convert(sane_model_12, 0.271828, rng_key=(1, 2))
        text = trace_csv_string(trace)
        lines = text.strip().split("\n")
        assert lines[0] == "bit,decision,applied_step,t_bit,delta_q"
        assert len(lines) == 1 + 12
        for i, line in enumerate(lines[1:]):
            bit, dec, step, t_bit, dq = line.split(",")
            assert int(bit) == i + 1
            assert int(dec) == trace.bits[i]
            assert float(step) == trace.applied_step[i]
            assert float(t_bit) == trace.t_bit[i]
            assert float(dq) == trace.delta_q[i]


class TestNoiseStreams:
    def test_conversion_noise_deterministic(self):
        a = conversion_noise((9, 4), 12)
        b = conversion_noise((9, 4), 12)
        assert a[0] == b[0]
        np.testing.assert_array_equal(a[1], b[1])

    def test_none_key_is_silent(self):
        smp, cmp_draws = conversion_noise(None, 8)
        assert smp == 0.0
        assert not cmp_draws.any()
