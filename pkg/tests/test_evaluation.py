import numpy as np
import pytest

from engage import evaluation as ev
from engage import model as mdl
from engage.dataset import WindowSample
from engage.errors import EmptySet, MalformedRow, SingleClass


def oracle_auc(preds, truths):
    """Brute-force Mann-Whitney pair counting: ties score half."""
    pos = [p for p, t in zip(preds, truths) if t]
    neg = [p for p, t in zip(preds, truths) if not t]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


class TestTestMse:
    def test_exact_predictions_zero(self):
        # zero params predict 0.5 everywhere; labels 0.5 -> mse 0
        rng = np.random.default_rng(0)
        p = mdl.init_params(2, 3, rng)
        zeroed = p.with_arrays({k: np.zeros_like(v) for k, v in p.arrays().items()})
        samples = [WindowSample("v", 0, rng.normal(size=(3, 2)), 0.5) for _ in range(5)]
        assert ev.test_mse(zeroed, samples) == 0.0

    def test_constant_half_on_balanced_binary_labels(self):
        rng = np.random.default_rng(1)
        p = mdl.init_params(2, 3, rng)
        zeroed = p.with_arrays({k: np.zeros_like(v) for k, v in p.arrays().items()})
        samples = [
            WindowSample("v", 0, rng.normal(size=(3, 2)), float(i % 2)) for i in range(10)
        ]
        assert ev.test_mse(zeroed, samples) == pytest.approx(0.25)

    def test_matches_two_pass_sum_oracle(self):
        rng = np.random.default_rng(2)
        p = mdl.init_params(3, 4, rng)
        samples = [
            WindowSample("v", 0, rng.normal(size=(4, 3)), float(rng.uniform()))
            for _ in range(100)
        ]
        preds = [mdl.forward(p, s)[0] for s in samples]
        expect = sum((y - s.label) ** 2 for y, s in zip(preds, samples)) / len(samples)
        assert ev.test_mse(p, samples) == pytest.approx(expect, abs=1e-12)

    def test_empty_set(self):
        p = mdl.init_params(2, 2, np.random.default_rng(0))
        with pytest.raises(EmptySet):
            ev.test_mse(p, [])


class TestGroundTruth:
    def test_mono_interval_engaged(self):
        t = ev.InteractionLabelTrack("v", [(0.0, 10.0, "Mono")])
        assert ev.derive_ground_truth(t, [5.0])[0]

    def test_temporary_disengagement_overrides(self):
        t = ev.InteractionLabelTrack("v", [(0.0, 10.0, "Mono"), (4.0, 6.0, "TD")])
        out = ev.derive_ground_truth(t, [3.0, 5.0, 7.0])
        assert list(out) == [True, False, True]

    def test_outside_all_intervals(self):
        t = ev.InteractionLabelTrack("v", [(0.0, 10.0, "Multi")])
        assert not ev.derive_ground_truth(t, [12.0])[0]
        assert not ev.derive_ground_truth(t, [-1.0])[0]

    def test_sed_ebd_do_not_affect_truth(self):
        t = ev.InteractionLabelTrack(
            "v", [(0.0, 10.0, "Mono"), (2.0, 8.0, "SED"), (3.0, 9.0, "EBD")]
        )
        assert ev.derive_ground_truth(t, [5.0])[0]

    def test_interaction_csv(self, tmp_path):
        p = tmp_path / "ue1.csv"
        p.write_text("start_s,end_s,tag\n0,10,Mono\n4,6,TD\n")
        t = ev.load_interaction_track(str(p))
        assert t.video_id == "ue1"
        assert t.intervals == [(0.0, 10.0, "Mono"), (4.0, 6.0, "TD")]

    def test_interaction_csv_malformed(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("start_s,end_s,tag\n0,10\n")
        with pytest.raises(MalformedRow):
            ev.load_interaction_track(str(p))


class TestBinarize:
    def test_threshold_zero_all_true(self):
        assert ev.binarize([0.0, 0.5, 1.0], 0.0).all()

    def test_threshold_above_one_all_false(self):
        assert not ev.binarize([0.0, 0.5, 1.0], 1.1).any()

    def test_boundary_is_inclusive(self):
        assert list(ev.binarize([0.2, 0.8], 0.5)) == [False, True]
        assert ev.binarize([0.5], 0.5)[0]

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(3)
        preds = rng.uniform(0, 1, 50)
        prev = ev.binarize(preds, 0.0)
        for thr in np.linspace(0.1, 1.0, 10):
            cur = ev.binarize(preds, thr)
            assert not np.any(cur & ~prev)
            prev = cur


class TestRocAuc:
    def test_perfect_separation(self):
        preds = [0.1, 0.2, 0.8, 0.9]
        truths = [False, False, True, True]
        assert ev.roc_auc(preds, truths).auc == pytest.approx(1.0)

    def test_all_tied_scores(self):
        preds = [0.5] * 6
        truths = [True, False] * 3
        assert ev.roc_auc(preds, truths).auc == pytest.approx(0.5)

    def test_matches_pair_counting_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            n = int(rng.integers(4, 30))
            preds = np.round(rng.uniform(0, 1, n), 1)  # coarse grid forces ties
            truths = rng.uniform(size=n) < 0.5
            if truths.all() or not truths.any():
                continue
            res = ev.roc_auc(preds, truths)
            assert res.auc == pytest.approx(oracle_auc(preds, truths), abs=1e-9)

    def test_curve_endpoints_and_monotonicity(self):
        rng = np.random.default_rng(5)
        preds = rng.uniform(0, 1, 40)
        truths = rng.uniform(size=40) < 0.4
        res = ev.roc_auc(preds, truths)
        pts = {(round(f, 12), round(t, 12)) for _, f, t in res.points}
        assert (0.0, 0.0) in pts and (1.0, 1.0) in pts
        curve = sorted((f, t) for _, f, t in res.points)
        for (f0, t0), (f1, t1) in zip(curve, curve[1:]):
            assert t1 >= t0 - 1e-12

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(6)
        preds = rng.uniform(0, 1, 60)
        truths = rng.uniform(size=60) < 0.5
        a = ev.roc_auc(preds, truths).auc
        b = ev.roc_auc(preds**2, truths).auc
        assert a == pytest.approx(b, abs=1e-12)

    def test_label_inversion_symmetry(self):
        rng = np.random.default_rng(7)
        preds = rng.uniform(0, 1, 60)
        truths = rng.uniform(size=60) < 0.5
        a = ev.roc_auc(preds, truths).auc
        b = ev.roc_auc(preds, ~truths).auc
        assert a + b == pytest.approx(1.0, abs=1e-12)

    def test_single_class(self):
        with pytest.raises(SingleClass):
            ev.roc_auc([0.1, 0.2], [True, True])

    def test_roc_csv(self, tmp_path):
        preds = [0.1, 0.2, 0.8, 0.9]
        truths = [False, False, True, True]
        res = ev.roc_auc(preds, truths)
        out = tmp_path / "roc.csv"
        plot = tmp_path / "roc.dat"
        ev.write_roc_csv(res, str(out), str(plot))
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "thr,fpr,tpr"
        assert lines[-1] == "auc=1.000000"
        assert len(plot.read_text().strip().split("\n")) == len(res.points)
