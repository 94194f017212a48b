import numpy as np
import pytest

from tna import SeededRng
from tna.core import TiltPlan
from tna.errors import DomainError
from tna.geometry import angle_between
from tna.verify import (
    closed_form_mode_deg,
    cone_directions,
    emit_figure_curves,
    orthogonality_concentration,
    prop1_check,
    sample_on_cone,
    thm1_mode_check,
)


class TestClosedFormMode:
    def test_reference_value(self):
        # arccos(cos 60 * cos 30) - 60 for the canonical parameter pair
        assert closed_form_mode_deg(60.0, 30.0) == pytest.approx(4.3411, abs=5e-5)

    def test_zero_tilt_gives_zero_shift(self):
        assert closed_form_mode_deg(45.0, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_mode_grows_with_theta(self):
        vals = [closed_form_mode_deg(60.0, t) for t in (5.0, 15.0, 25.0, 35.0)]
        assert vals == sorted(vals)
        assert vals[0] > 0.0

    def test_mode_shrinks_with_psi(self):
        # the same tilt shifts a nearly-orthogonal pair less
        assert closed_form_mode_deg(80.0, 30.0) < closed_form_mode_deg(40.0, 30.0)


class TestConeSampling:
    def test_exact_angle(self):
        u = np.zeros(16)
        u[0] = 1.0
        for ang in (5.0, 30.0, 90.0, 150.0):
            s = sample_on_cone(u, ang, SeededRng(1))
            assert angle_between(s.vector, u) == pytest.approx(ang, abs=1e-9)
            assert np.linalg.norm(s.vector) == pytest.approx(1.0)

    def test_requires_unit_base(self):
        with pytest.raises(DomainError):
            sample_on_cone(np.array([2.0, 0.0, 0.0]), 30.0, SeededRng(0))

    def test_angle_domain(self):
        u = np.array([1.0, 0.0, 0.0])
        for bad in (0.0, 180.0, -5.0):
            with pytest.raises(DomainError):
                sample_on_cone(u, bad, SeededRng(0))

    def test_directions_orthogonal_to_base(self):
        u = np.zeros(8)
        u[3] = 1.0
        dirs = cone_directions(u, 100, SeededRng(2).generator)
        assert np.abs(dirs @ u).max() < 1e-12
        assert np.linalg.norm(dirs, axis=1) == pytest.approx(np.ones(100))


class TestThm1:
    def test_parameter_domain(self):
        with pytest.raises(DomainError):
            thm1_mode_check(64, 30.0, 60.0)  # theta must be below psi
        with pytest.raises(DomainError):
            thm1_mode_check(2, 60.0, 30.0)

    def test_small_run_matches_closed_form(self):
        rep = thm1_mode_check(256, 60.0, 30.0, samples=60_000, seed=0)
        assert rep.gap_deg <= 1.0
        assert rep.histogram.sum() == 60_000

    def test_gap_shrinks_with_dimension(self):
        gaps = [
            thm1_mode_check(n, 60.0, 30.0, samples=40_000, seed=0).gap_deg
            for n in (8, 64, 512)
        ]
        # concentration of measure: high dimensions pin the shift at the mode
        assert gaps[2] <= gaps[0]

    def test_deterministic(self):
        a = thm1_mode_check(64, 60.0, 30.0, samples=20_000, seed=3)
        b = thm1_mode_check(64, 60.0, 30.0, samples=20_000, seed=3)
        assert np.array_equal(a.histogram, b.histogram)
        assert a.empirical_mode_deg == b.empirical_mode_deg

    def test_mean_reported_not_asserted(self):
        rep = thm1_mode_check(64, 60.0, 30.0, samples=20_000, seed=0)
        assert np.isfinite(rep.empirical_mean_deg)


class TestProp1:
    def test_zero_tilt_equality(self):
        holds, before, after = prop1_check([30.0, 80.0], 0.0, [1.0, 1.0], z_norm=5.0)
        assert holds and abs(before - after) <= 1e-15

    def test_positive_tilt_strictly_relaxes(self):
        for theta in np.arange(5.0, 90.0, 10.0):
            holds, before, after = prop1_check([30.0, 80.0], theta, [1.0, 1.0], z_norm=5.0)
            assert holds and after < before

    def test_monotone_in_theta(self):
        confs = [prop1_check([30.0, 80.0], t, [1.0, 1.0], z_norm=5.0)[2]
                 for t in (0.0, 20.0, 40.0, 60.0, 80.0)]
        assert confs == sorted(confs, reverse=True)

    def test_input_validation(self):
        with pytest.raises(DomainError):
            prop1_check([30.0], 10.0, [1.0])  # needs at least two classes
        with pytest.raises(DomainError):
            prop1_check([30.0, 95.0], 10.0, [1.0, 1.0])
        with pytest.raises(DomainError):
            prop1_check([30.0, 80.0], 90.0, [1.0, 1.0])


class TestConcentration:
    def test_high_dimension_concentrates_at_90(self):
        mean, std = orthogonality_concentration(2048, samples=20_000, seed=0)
        assert abs(mean - 90.0) < 0.5
        assert std < 2.0

    def test_low_dimension_spreads(self):
        _, std_low = orthogonality_concentration(4, samples=20_000, seed=0)
        _, std_high = orthogonality_concentration(1024, samples=20_000, seed=0)
        assert std_low > std_high

    def test_dimension_check(self):
        with pytest.raises(DomainError):
            orthogonality_concentration(1)


class TestFigureCurves:
    def test_fig2_csv(self, tmp_path, small_bundle):
        out = tmp_path / "fig2.csv"
        count = emit_figure_curves(small_bundle, TiltPlan(target_mrc_deg=0.0, n_t=50),
                                   "fig2", out, seeds=(0,))
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "theta_s,seed,n_r,mrc_deg"
        assert len(lines) == count + 1

    def test_angles_csv(self, tmp_path):
        from tna import make_synth_a

        b = make_synth_a(n=24, m=400, num_classes=4)
        out = tmp_path / "angles.csv"
        count = emit_figure_curves(b, TiltPlan(target_mrc_deg=0.0, n_e=2), "angles", out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "variant,angle_deg"
        # one row per sample for orig, two tilt variants, and the false class
        assert count == 4 * b.split_size("test")

    def test_unknown_figure(self, tmp_path, small_bundle):
        with pytest.raises(DomainError):
            emit_figure_curves(small_bundle, TiltPlan(target_mrc_deg=0.0), "fig9",
                               tmp_path / "x.csv")
