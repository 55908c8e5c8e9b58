"""Sample assembly, stump fitting, and Gentle AdaBoost training."""

import numpy as np
import pytest

from ctxmatch.boosting import (
    assemble_samples,
    evaluate,
    evaluate_batch,
    fit_stump,
    load_model,
    save_model,
    theta_grid,
    train,
)
from ctxmatch.bench.synth import synth_generate
from ctxmatch.codebook import train_kmeans
from ctxmatch.data import ChangeMask, DatasetPair, DisparityMap
from ctxmatch.features import filter_bank_17
from ctxmatch.grid import Image, to_cielab
from ctxmatch.representation import build_representation, sample_rectangles


def _stereo_pair(seed=0, h=24, w=40, shift=3, n_valid=10):
    pair = synth_generate("shift-stereo", seed=seed, height=h, width=w, shift=shift)
    gt = pair.ground_truth
    # keep a small deterministic subset of labels
    ys, xs = np.nonzero(gt.valid)
    rng = np.random.default_rng(seed)
    keep = rng.choice(len(xs), size=n_valid, replace=False)
    valid = np.zeros_like(gt.valid)
    valid[ys[keep], xs[keep]] = True
    return DatasetPair(pair.image1, pair.image2,
                       DisparityMap(values=gt.values, valid=valid))


class TestAssembleSamples:
    def test_counts_and_weights(self):
        pair = _stereo_pair(n_valid=10)
        ss = assemble_samples([pair], neg_ratio=50, seed=0, d_max=8)
        n_pos = int((ss.label > 0).sum())
        n_neg = int((ss.label < 0).sum())
        assert n_pos == 10
        assert n_neg == 500
        # balanced class mass, total one
        assert ss.weight.sum() == pytest.approx(1.0)
        assert ss.weight[ss.label > 0].sum() == pytest.approx(0.5)
        # positives use the true disparity
        pos = ss.label > 0
        gt = pair.ground_truth
        for x1, y1, x2, y2 in zip(ss.x1[pos], ss.y1[pos], ss.x2[pos], ss.y2[pos]):
            assert y2 == y1
            assert x1 - x2 == pytest.approx(gt.values[y1, x1])

    def test_negatives_exclude_true_match(self):
        pair = _stereo_pair(n_valid=10)
        ss = assemble_samples([pair], neg_ratio=50, seed=0, d_max=8)
        gt = pair.ground_truth
        neg = ss.label < 0
        d_neg = ss.x1[neg] - ss.x2[neg]
        d_true = gt.values[ss.y1[neg], ss.x1[neg]]
        assert np.all(np.abs(d_neg - d_true) > 1.0)
        assert np.all(d_neg >= 0) and np.all(d_neg <= 8)
        assert np.all(ss.x2[neg] >= 0)

    def test_change_task_uses_same_pixel(self):
        h, w = 10, 12
        values = np.zeros((h, w), dtype=bool)
        values[2:5, 3:7] = True
        valid = np.ones((h, w), dtype=bool)
        rng = np.random.default_rng(0)
        img = Image.from_array(rng.random((h, w, 3)))
        pair = DatasetPair(img, img, ChangeMask(values=values, valid=valid))
        ss = assemble_samples([pair], seed=0)
        assert np.array_equal(ss.x1, ss.x2)
        assert np.array_equal(ss.y1, ss.y2)
        # changed pixels are negatives (non-matching), unchanged positives
        assert int((ss.label < 0).sum()) == int(values.sum())
        assert int((ss.label > 0).sum()) == int((~values).sum())

    def test_determinism(self):
        pair = _stereo_pair(n_valid=8)
        a = assemble_samples([pair], neg_ratio=10, seed=3, d_max=8)
        b = assemble_samples([pair], neg_ratio=10, seed=3, d_max=8)
        for f in ("x1", "y1", "x2", "y2", "label", "weight"):
            assert np.array_equal(getattr(a, f), getattr(b, f))

    def test_max_positives(self):
        pair = _stereo_pair(n_valid=10)
        ss = assemble_samples([pair], neg_ratio=5, seed=0, d_max=8, max_positives=4)
        assert int((ss.label > 0).sum()) == 4

    def test_no_labels(self):
        pair = _stereo_pair(n_valid=10)
        gt = pair.ground_truth
        empty = DatasetPair(pair.image1, pair.image2,
                            DisparityMap(values=gt.values,
                                         valid=np.zeros_like(gt.valid)))
        with pytest.raises(ValueError):
            assemble_samples([empty], d_max=8)


class TestFitStump:
    def test_hand_example_perfect_split(self):
        # two samples: v=0 with y=+1, v=1 with y=-1, equal weights.
        # theta between them -> low side responds +1, high side -1,
        # so b = +1, a + b = -1 -> a = -2, zero error
        values = np.array([0.0, 1.0])
        targets = np.array([1.0, -1.0])
        weights = np.array([0.5, 0.5])
        theta, a, b, err = fit_stump(values, targets, weights,
                                     grid=np.array([0.5]))
        assert theta == 0.5
        assert b == pytest.approx(1.0)
        assert a == pytest.approx(-2.0)
        assert err == pytest.approx(0.0, abs=1e-12)

    def test_degenerate_constant_values(self):
        # all values identical: no usable split, constant response = weighted
        # mean of targets
        values = np.zeros(6)
        targets = np.array([1.0, 1.0, 1.0, -1.0, -1.0, 1.0])
        weights = np.full(6, 1 / 6)
        theta, a, b, err = fit_stump(values, targets, weights)
        assert a == 0.0
        assert b == pytest.approx(targets.mean())

    def test_all_positive_targets(self):
        values = np.array([0.0, 1.0, 2.0, 3.0])
        targets = np.ones(4)
        weights = np.full(4, 0.25)
        theta, a, b, err = fit_stump(values, targets, weights)
        # any split responds +1 on both sides
        assert a + b == pytest.approx(1.0)
        assert b == pytest.approx(1.0)
        assert err == pytest.approx(0.0, abs=1e-12)

    def test_matches_brute_force_oracle(self):
        # independent oracle: for every candidate theta compute the weighted
        # least-squares responses and error directly, take the best
        rng = np.random.default_rng(0)
        for trial in range(100):
            n = int(rng.integers(5, 40))
            values = np.round(rng.normal(size=n), 2)  # duplicates likely
            targets = rng.choice([-1.0, 1.0], size=n)
            weights = rng.random(n) + 0.01
            weights /= weights.sum()
            grid = theta_grid(values, 16)
            theta, a, b, err = fit_stump(values, targets, weights, grid=grid)
            best_err = np.inf
            for t in grid:
                hi = values > t
                if hi.all() or (~hi).all():
                    continue
                rb = np.sum(weights[~hi] * targets[~hi]) / weights[~hi].sum()
                ra = np.sum(weights[hi] * targets[hi]) / weights[hi].sum()
                h = np.where(hi, ra, rb)
                e = float(np.sum(weights * (targets - h) ** 2))
                if e < best_err - 1e-12:
                    best_err = e
            assert err == pytest.approx(best_err, abs=1e-9), trial

    def test_tie_breaks_to_smallest_theta(self):
        # symmetric data: thetas 0.5 and 1.5 are distinct splits; make them
        # equal error and check the smaller wins
        values = np.array([0.0, 1.0, 1.0, 2.0])
        targets = np.array([1.0, 1.0, -1.0, -1.0])
        weights = np.full(4, 0.25)
        theta, _, _, _ = fit_stump(values, targets, weights,
                                   grid=np.array([0.5, 1.5]))
        assert theta == 0.5


def _training_setup(seed=0):
    pair = _stereo_pair(seed=seed, n_valid=15)
    lab = to_cielab(pair.image1)
    fb = filter_bank_17(lab)
    cb = train_kmeans(fb.data.reshape(-1, fb.dim)[::7], 8, seed=0, kind="texton")
    cbs = {"texton": cb}
    rep1 = build_representation(pair.image1, cbs, ("texton",), bow_factor=4)
    rep2 = build_representation(pair.image2, cbs, ("texton",), bow_factor=4)
    rects = sample_rectangles(seed=0, count=30, max_extent=8)
    ss = assemble_samples([pair], neg_ratio=10, seed=0, d_max=8)
    return pair, ss, [(rep1, rep2)], rects


class TestTrain:
    def test_loss_decreases(self):
        _, ss, reps, rects = _training_setup()
        model, losses = train(ss, reps, rects, rounds=25, dims_per_round=40,
                              seed=0, absolute=True, neg_ratio=10)
        assert model.n_stumps == 25
        assert losses[0] <= 1.0 + 1e-9
        assert losses[-1] < losses[0]
        # exponential loss never increases for gentle stumps on train data
        assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))

    def test_training_improves_separation(self):
        _, ss, reps, rects = _training_setup()
        model, _ = train(ss, reps, rects, rounds=40, dims_per_round=40,
                         seed=0, absolute=True, neg_ratio=10)
        scores = evaluate_batch(model, reps[0][0], reps[0][1],
                                ss.x1, ss.y1, ss.x2, ss.y2)
        acc = float(np.mean(np.sign(scores) == ss.label))
        assert acc > 0.9

    def test_zero_rounds(self):
        _, ss, reps, rects = _training_setup()
        model, losses = train(ss, reps, rects, rounds=0, dims_per_round=10)
        assert model.n_stumps == 0
        assert losses == []
        s = evaluate(model, reps[0][0], reps[0][1], (5, 5), (5, 5))
        assert s == 0.0

    def test_seed_determinism(self):
        _, ss, reps, rects = _training_setup()
        m1, l1 = train(ss, reps, rects, rounds=8, dims_per_round=20, seed=4)
        m2, l2 = train(ss, reps, rects, rounds=8, dims_per_round=20, seed=4)
        assert l1 == l2
        assert np.array_equal(m1.stump_theta, m2.stump_theta)
        assert np.array_equal(m1.stump_rect, m2.stump_rect)

    def test_bad_dims_per_round(self):
        _, ss, reps, rects = _training_setup()
        with pytest.raises(ValueError):
            train(ss, reps, rects, rounds=1, dims_per_round=0)


class TestModelPersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        _, ss, reps, rects = _training_setup()
        model, _ = train(ss, reps, rects, rounds=12, dims_per_round=20,
                         seed=1, absolute=True, neg_ratio=10,
                         codebook_digests={"texton": "abc123"})
        p1 = tmp_path / "m1.bin"
        save_model(model, p1)
        back = load_model(p1)
        assert back.families == model.families
        assert back.family_channels == model.family_channels
        assert back.bow_factor == model.bow_factor
        assert back.absolute == model.absolute
        assert back.seed == model.seed
        assert back.neg_ratio == model.neg_ratio
        assert back.codebook_digests == {"texton": "abc123"}
        assert back.rect_set.rects == model.rect_set.rects
        for f in ("stump_family", "stump_rect", "stump_channel",
                  "stump_theta", "stump_a", "stump_b"):
            assert np.array_equal(getattr(back, f), getattr(model, f))
        # saving the loaded model reproduces the file byte for byte
        p2 = tmp_path / "m2.bin"
        save_model(back, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_scores_survive_round_trip(self, tmp_path):
        _, ss, reps, rects = _training_setup()
        model, _ = train(ss, reps, rects, rounds=10, dims_per_round=20, seed=2)
        path = tmp_path / "m.bin"
        save_model(model, path)
        back = load_model(path)
        s1 = evaluate_batch(model, reps[0][0], reps[0][1], ss.x1, ss.y1, ss.x2, ss.y2)
        s2 = evaluate_batch(back, reps[0][0], reps[0][1], ss.x1, ss.y1, ss.x2, ss.y2)
        assert np.array_equal(s1, s2)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad"
        path.write_bytes(b"something else\nend\n")
        with pytest.raises(ValueError):
            load_model(path)
