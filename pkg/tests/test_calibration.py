import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tna import SeededRng
from tna.calibration import (
    EnsembleTemperatureMap,
    IdentityMap,
    IsotonicOvAMap,
    TemperatureMap,
    apply_map,
    apply_map_rows,
    fit_ets,
    fit_irova,
    fit_temperature,
    load_map,
    map_from_dict,
    mean_nll,
    pava,
    save_map,
)
from tna.core import softmax
from tna.errors import DomainError, UnfittedMapError


def pava_reference(values, weights):
    """Independent O(n^2) oracle: merge adjacent violating blocks until none."""
    blocks = [[float(v), float(w)] for v, w in zip(values, weights)]
    sizes = [1] * len(blocks)
    changed = True
    while changed:
        changed = False
        for i in range(len(blocks) - 1):
            if blocks[i][0] > blocks[i + 1][0] + 1e-15:
                v1, w1 = blocks[i]
                v2, w2 = blocks[i + 1]
                blocks[i] = [(v1 * w1 + v2 * w2) / (w1 + w2), w1 + w2]
                sizes[i] += sizes[i + 1]
                del blocks[i + 1], sizes[i + 1]
                changed = True
                break
    out = []
    for (v, _), s in zip(blocks, sizes):
        out.extend([v] * s)
    return np.array(out)


def calibrated_logits(m=4000, c=10, scale=2.0, seed=42):
    """Logits whose labels are drawn from their own softmax: perfectly calibrated."""
    gen = SeededRng(seed).generator
    s = gen.standard_normal((m, c)) * scale
    p = softmax(s)
    u = gen.random(m)
    labels = (p.cumsum(axis=1) < u[:, None]).sum(axis=1)
    return s, labels


class TestTemperature:
    def test_map_validation(self):
        with pytest.raises(DomainError):
            TemperatureMap(T=0.0)

    def test_fit_on_calibrated_logits_is_near_one(self):
        s, y = calibrated_logits()
        assert fit_temperature(s, y).T == pytest.approx(1.0, abs=0.05)

    def test_scaling_logits_scales_temperature(self):
        s, y = calibrated_logits()
        t0 = fit_temperature(s, y).T
        t3 = fit_temperature(3.0 * s, y).T
        assert t3 == pytest.approx(3.0 * t0, rel=0.05)

    def test_matches_scipy_minimizer(self):
        from scipy.optimize import minimize_scalar

        s, y = calibrated_logits(m=1000, scale=3.0, seed=1)
        res = minimize_scalar(
            lambda logt: mean_nll(softmax(s / np.exp(logt)), y),
            bounds=(np.log(0.05), np.log(10.0)),
            method="bounded",
        )
        assert fit_temperature(s, y).T == pytest.approx(np.exp(res.x), abs=2e-3)

    def test_fit_improves_nll_of_miscalibrated_logits(self):
        s, y = calibrated_logits()
        sharp = 4.0 * s
        tmap = fit_temperature(sharp, y)
        assert mean_nll(apply_map_rows(tmap, sharp), y) < mean_nll(softmax(sharp), y)

    def test_result_stays_in_bracket(self):
        s, y = calibrated_logits(m=500)
        assert 0.05 <= fit_temperature(1000.0 * s, y).T <= 10.0

    def test_single_label_warns(self):
        s = np.random.default_rng(0).standard_normal((20, 3))
        with pytest.warns(UserWarning):
            fit_temperature(s, np.zeros(20, dtype=int))

    def test_apply_divides_logits(self):
        tmap = TemperatureMap(T=2.0)
        s = np.array([1.0, 3.0, -1.0])
        assert tmap.apply(s) == pytest.approx(softmax(s / 2.0))


class TestEts:
    def test_weights_on_simplex(self):
        s, y = calibrated_logits(m=800)
        emap = fit_ets(2.0 * s, y, fit_temperature(2.0 * s, y).T)
        w = np.array(emap.w)
        assert np.all(w >= 0) and w.sum() == pytest.approx(1.0)

    def test_never_worse_than_plain_temperature(self):
        s, y = calibrated_logits(m=800, seed=3)
        sharp = 3.0 * s
        t = fit_temperature(sharp, y).T
        emap = fit_ets(sharp, y, t)
        nll_ets = mean_nll(apply_map_rows(emap, sharp), y)
        nll_ts = mean_nll(apply_map_rows(TemperatureMap(T=t), sharp), y)
        assert nll_ets <= nll_ts + 1e-9

    def test_degenerate_weight_validation(self):
        with pytest.raises(DomainError):
            EnsembleTemperatureMap(T=1.0, w=(0.6, 0.6, -0.2))
        with pytest.raises(DomainError):
            EnsembleTemperatureMap(T=1.0, w=(0.5, 0.2, 0.2))

    def test_apply_is_stated_mixture(self):
        emap = EnsembleTemperatureMap(T=2.0, w=(0.5, 0.3, 0.2))
        s = np.array([1.0, -2.0, 0.5, 3.0])
        expected = 0.5 * softmax(s / 2.0) + 0.3 * softmax(s) + 0.2 / 4
        assert emap.apply(s) == pytest.approx(expected)
        assert emap.apply(s).sum() == pytest.approx(1.0)


class TestPava:
    def test_already_monotone_unchanged(self):
        v = np.array([1.0, 2.0, 2.0, 5.0])
        assert np.array_equal(pava(v), v)

    def test_hand_case_single_violation(self):
        assert pava(np.array([1.0, 3.0, 2.0])) == pytest.approx([1.0, 2.5, 2.5])

    def test_hand_case_cascade(self):
        # decreasing input pools to one block at the mean
        assert pava(np.array([4.0, 3.0, 2.0, 1.0])) == pytest.approx([2.5] * 4)

    def test_weighted_hand_case(self):
        out = pava(np.array([2.0, 0.0]), np.array([3.0, 1.0]))
        assert out == pytest.approx([1.5, 1.5])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=1, max_value=8))
    def test_matches_independent_oracle(self, seed, size):
        gen = SeededRng(seed).generator
        v = gen.uniform(0, 1, size)
        w = gen.uniform(0.1, 2.0, size)
        assert pava(v, w) == pytest.approx(pava_reference(v, w), abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_output_monotone_and_mean_preserving(self, seed):
        gen = SeededRng(seed).generator
        v = gen.uniform(0, 1, 20)
        w = gen.uniform(0.1, 2.0, 20)
        out = pava(v, w)
        assert np.all(np.diff(out) >= -1e-12)
        assert np.dot(out, w) == pytest.approx(np.dot(v, w))


class TestIrova:
    def test_fit_rejects_bad_inputs(self):
        with pytest.raises(DomainError):
            fit_irova(np.array([[0.5, 1.5]]), np.array([0]))
        with pytest.raises(DomainError):
            fit_irova(np.empty((0, 2)), np.array([], dtype=int))

    def test_missing_class_flagged(self):
        scores = np.array([[0.9, 0.05, 0.05], [0.2, 0.7, 0.1]])
        m = fit_irova(scores, np.array([0, 1]))
        assert m.missing_classes == [2]
        assert m._lookup(2, 0.5) == 0.0

    def test_perfectly_separable_scores(self):
        scores = np.array([[0.9, 0.1], [0.8, 0.2], [0.2, 0.8], [0.1, 0.9]])
        y = np.array([0, 0, 1, 1])
        m = fit_irova(scores, y)
        # class-0 indicator is monotone in the class-0 score: fit is exact
        assert m._lookup(0, 0.9) == pytest.approx(1.0)
        assert m._lookup(0, 0.1) == pytest.approx(0.0)

    def test_tied_scores_are_merged(self):
        scores = np.array([[0.5, 0.5], [0.5, 0.5], [0.5, 0.5], [0.5, 0.5]])
        y = np.array([0, 1, 0, 1])
        m = fit_irova(scores, y)
        assert m.thresholds[0].size == 1
        assert m._lookup(0, 0.5) == pytest.approx(0.5)

    def test_out_of_range_clamps(self):
        m = fit_irova(np.array([[0.3, 0.7], [0.6, 0.4]]), np.array([1, 0]))
        assert m._lookup(0, 0.0) == m._lookup(0, 0.3)
        assert m._lookup(0, 1.0) == m._lookup(0, 0.6)

    def test_apply_returns_distribution(self):
        gen = SeededRng(13).generator
        s = gen.standard_normal((200, 5))
        y = gen.integers(0, 5, 200)
        m = fit_irova(softmax(s), y)
        p = m.apply(s[0])
        assert p.sum() == pytest.approx(1.0) and np.all(p > 0)

    def test_apply_scores_matches_rowwise_apply(self):
        gen = SeededRng(14).generator
        s = gen.standard_normal((50, 4))
        y = gen.integers(0, 4, 50)
        m = fit_irova(softmax(s), y)
        rows = apply_map_rows(m, s)
        assert rows[7] == pytest.approx(m.apply(s[7]))


class TestDispatchAndSerialization:
    def test_apply_map_none_raises(self):
        with pytest.raises(UnfittedMapError):
            apply_map(None, np.zeros(3))

    def test_apply_map_rows_matches_single(self):
        s = SeededRng(15).generator.standard_normal((6, 4))
        for cal_map in (IdentityMap(), TemperatureMap(T=1.7),
                        EnsembleTemperatureMap(T=1.7, w=(0.6, 0.3, 0.1))):
            rows = apply_map_rows(cal_map, s)
            assert rows[2] == pytest.approx(cal_map.apply(s[2]))

    @pytest.mark.parametrize("kind", ["identity", "temperature", "ets", "irova"])
    def test_round_trip(self, tmp_path, kind):
        gen = SeededRng(16).generator
        s = gen.standard_normal((100, 3))
        y = gen.integers(0, 3, 100)
        if kind == "identity":
            m = IdentityMap()
        elif kind == "temperature":
            m = fit_temperature(s, y)
        elif kind == "ets":
            m = fit_ets(s, y, fit_temperature(s, y).T)
        else:
            m = fit_irova(softmax(s), y)
        path = tmp_path / "map.json"
        save_map(m, path)
        loaded = load_map(path)
        assert apply_map_rows(loaded, s) == pytest.approx(apply_map_rows(m, s), abs=1e-15)

    def test_fitted_maps_record_objective(self):
        doc = TemperatureMap(T=2.0).to_dict()
        assert doc["objective"] == "nll"

    def test_unknown_kind_rejected(self):
        with pytest.raises(DomainError):
            map_from_dict({"type": "platt"})
