import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tna import SeededRng
from tna.calibration import IdentityMap
from tna.errors import DomainError
from tna.metrics import (
    PredictionRecord,
    adaece,
    ece,
    evaluate,
    records_from_probs,
    reliability_table,
)


def brute_force_ece(records, b):
    """Independent oracle: assign each record to bin (j/B, (j+1)/B] by scanning."""
    bins = [[] for _ in range(b)]
    for r in records:
        for j in range(b):
            lo, hi = j / b, (j + 1) / b
            if (lo < r.confidence <= hi) or (j == 0 and r.confidence <= lo):
                bins[j].append(r)
                break
    total = len(records)
    out = 0.0
    for group in bins:
        if not group:
            continue
        acc = sum(r.correct for r in group) / len(group)
        conf = sum(r.confidence for r in group) / len(group)
        out += len(group) / total * abs(acc - conf)
    return out


def brute_force_adaece(records, b):
    """Independent oracle: stable sort, floor(m/B)+1 sizes for the first m%B bins."""
    ordered = sorted(enumerate(records), key=lambda t: (t[1].confidence, t[0]))
    m = len(records)
    base, extra = divmod(m, b)
    out, pos = 0.0, 0
    for j in range(b):
        size = base + (1 if j < extra else 0)
        group = [r for _, r in ordered[pos : pos + size]]
        pos += size
        if not group:
            continue
        acc = sum(r.correct for r in group) / len(group)
        conf = sum(r.confidence for r in group) / len(group)
        out += len(group) / m * abs(acc - conf)
    return out


def fixed_records():
    """25 hand-constructed records with deliberate bin-edge confidences."""
    gen = SeededRng(77).generator
    confs = [0.0, 1.0, 1 / 15, 2 / 15, 0.2, 1 / 3, 0.5, 0.5, 0.9999, 0.06667]
    confs += list(np.round(gen.uniform(0.01, 1.0, 15), 6))
    correct = [bool(x) for x in gen.integers(0, 2, len(confs))]
    return [
        PredictionRecord(confidence=float(c), correct=k, predicted_class=0)
        for c, k in zip(confs, correct)
    ]


class TestEce:
    @pytest.mark.parametrize("b", [3, 15])
    def test_matches_brute_force_oracle(self, b):
        records = fixed_records()
        assert abs(ece(records, b) - brute_force_ece(records, b)) <= 1e-12

    def test_b1_equals_global_gap(self):
        records = fixed_records()
        acc = np.mean([r.correct for r in records])
        conf = np.mean([r.confidence for r in records])
        assert ece(records, 1) == pytest.approx(abs(acc - conf), abs=1e-15)

    def test_perfectly_calibrated_bins(self):
        # 4 records at conf 0.75 in one bin, 3 correct: |0.75 - 0.75| = 0
        records = [PredictionRecord(0.75, c, 0) for c in (True, True, True, False)]
        assert ece(records, 4) == pytest.approx(0.0)

    def test_boundary_confidence_goes_to_lower_bin(self):
        # conf exactly 1/3 belongs to bin (0, 1/3] with B=3, not (1/3, 2/3]
        records = [
            PredictionRecord(1 / 3, True, 0),
            PredictionRecord(0.4, False, 0),
        ]
        # bins: (0,1/3] holds the first, (1/3,2/3] the second
        expected = 0.5 * abs(1 - 1 / 3) + 0.5 * abs(0 - 0.4)
        assert ece(records, 3) == pytest.approx(expected, abs=1e-15)

    def test_zero_confidence_in_first_bin(self):
        records = [PredictionRecord(0.0, False, 0)]
        assert ece(records, 15) == pytest.approx(0.0)

    def test_empty_and_bad_inputs(self):
        with pytest.raises(DomainError):
            ece([], 15)
        with pytest.raises(DomainError):
            ece(fixed_records(), 0)
        with pytest.raises(DomainError):
            ece([PredictionRecord(np.nan, True, 0)], 15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_permutation_invariance(self, seed):
        records = fixed_records()
        gen = SeededRng(seed).generator
        shuffled = [records[i] for i in gen.permutation(len(records))]
        assert ece(shuffled, 15) == pytest.approx(ece(records, 15), abs=1e-15)


class TestAdaece:
    @pytest.mark.parametrize("b", [3, 15])
    def test_matches_brute_force_oracle(self, b):
        records = fixed_records()
        assert abs(adaece(records, b) - brute_force_adaece(records, b)) <= 1e-12

    def test_b1_matches_ece_and_global_gap(self):
        records = fixed_records()
        acc = np.mean([r.correct for r in records])
        conf = np.mean([r.confidence for r in records])
        assert adaece(records, 1) == pytest.approx(abs(acc - conf), abs=1e-15)
        assert adaece(records, 1) == pytest.approx(ece(records, 1), abs=1e-15)

    def test_equal_mass_sizes(self):
        # 25 records, B=3 -> bins of 9, 8, 8
        table = reliability_table(fixed_records(), 3, scheme="equal-mass")
        assert [row[2] for row in table.rows] == [9, 8, 8]

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_permutation_invariance(self, seed):
        records = fixed_records()
        gen = SeededRng(seed).generator
        shuffled = [records[i] for i in gen.permutation(len(records))]
        assert adaece(shuffled, 15) == pytest.approx(adaece(records, 15), abs=1e-12)


class TestReliabilityTable:
    def test_interval_counts_sum_to_total(self):
        table = reliability_table(fixed_records(), 15)
        assert sum(row[2] for row in table.rows) == 25
        assert table.scheme == "equal-interval" and table.bins == 15

    def test_interval_edges(self):
        table = reliability_table(fixed_records(), 5)
        assert [row[:2] for row in table.rows] == [
            (j / 5, (j + 1) / 5) for j in range(5)
        ]

    def test_unknown_scheme(self):
        with pytest.raises(DomainError):
            reliability_table(fixed_records(), 5, scheme="quantile")


class TestEvaluate:
    def test_records_from_probs(self):
        probs = np.array([[0.7, 0.3], [0.2, 0.8]])
        recs = records_from_probs(probs, np.array([0, 0]))
        assert recs[0].correct and not recs[1].correct
        assert recs[1].confidence == pytest.approx(0.8)
        assert recs[1].predicted_class == 1

    def test_report_fields_consistent(self, small_bundle):
        feats, labels = small_bundle.split_view("test")
        rep = evaluate(small_bundle.layer.weights, small_bundle.layer.bias,
                       IdentityMap(), feats, labels, 15)
        assert rep.num_samples == labels.size
        assert rep.map_type == "identity"
        assert 0.0 <= rep.ece_pct <= 100.0
        assert 0.0 <= rep.accuracy_pct <= 100.0
        counts = sum(r[2] for r in rep.reliability_interval.rows)
        assert counts == labels.size

    def test_empty_split_rejected(self, small_bundle):
        with pytest.raises(DomainError):
            evaluate(small_bundle.layer.weights, small_bundle.layer.bias,
                     IdentityMap(), np.empty((0, 64)), np.array([], dtype=int))

    def test_json_and_csv_round_trip(self, tmp_path, small_bundle):
        import csv
        import json

        feats, labels = small_bundle.split_view("test")
        rep = evaluate(small_bundle.layer.weights, small_bundle.layer.bias,
                       IdentityMap(), feats, labels)
        rep.save_json(tmp_path / "r.json")
        rep.save_csv(tmp_path / "r.csv")
        with open(tmp_path / "r.json") as fh:
            doc = json.load(fh)
        assert doc["ece_pct"] == rep.ece_pct
        with open(tmp_path / "r.csv") as fh:
            row = next(csv.DictReader(fh))
        assert float(row["accuracy_pct"]) == pytest.approx(rep.accuracy_pct)
