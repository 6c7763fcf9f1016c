import numpy as np
import pytest

from salbench.errors import EmptyFixations, EmptyInput
from salbench.judgments import JudgmentRecord
from salbench.maps import prepare_pair
from salbench.metrics import cc, kld_sym, sim
from salbench.synth import (
    AnnotatorModel,
    DegradationKind,
    DegradationSpec,
    avg_map,
    degrade,
    fixations_to_gsm,
    gen_fixations,
    random_map,
    raw_density,
    simulate_answers,
)


def test_gen_fixations_deterministic():
    a = gen_fixations(5, 30, 32, 32, 5.0)
    b = gen_fixations(5, 30, 32, 32, 5.0)
    assert np.array_equal(a.points, b.points)
    c = gen_fixations(6, 30, 32, 32, 5.0)
    assert not np.array_equal(a.points, c.points)


def test_gen_fixations_zero_sigma_collapses_to_center():
    fix = gen_fixations(1, 50, 33, 17, 0.0)
    assert np.all(fix.points[:, 0] == 16)
    assert np.all(fix.points[:, 1] == 8)


def test_gen_fixations_mean_near_center():
    pts = np.concatenate(
        [gen_fixations(s, 100, 64, 64, 8.0).points for s in range(100)]
    )
    center = np.array([31.5, 31.5])
    assert np.all(np.abs(pts.mean(axis=0) - center) < 0.02 * 64)


def test_fixations_to_gsm_peaks():
    fix = gen_fixations(2, 1, 32, 32, 4.0)
    g = fixations_to_gsm(fix, 2.0, 32, 32)
    y, x = np.unravel_index(g.argmax(), g.shape)
    assert (x, y) == tuple(fix.points[0])
    from salbench.maps import FixationSet

    two = FixationSet("i", [(6, 6), (25, 25)])
    g2 = fixations_to_gsm(two, 2.0, 32, 32)
    assert g2[6, 6] > 0.9 and g2[25, 25] > 0.9
    with pytest.raises(EmptyFixations):
        fixations_to_gsm(FixationSet("i"), 2.0, 32, 32)


def test_raw_density_integral_matches_point_count():
    from salbench.maps import FixationSet

    rng = np.random.default_rng(3)
    pts = rng.integers(20, 44, (50, 2))
    fix = FixationSet("i", pts)
    density = raw_density(fix, 2.0, 64, 64)
    assert density.sum() == pytest.approx(50.0, rel=0.01)


def test_degrade_level_zero_identity_and_determinism():
    g = fixations_to_gsm(gen_fixations(4, 30, 32, 32, 5.0), 2.0, 32, 32)
    for kind in DegradationKind:
        out = degrade(g, DegradationSpec(kind, 0.0, seed=1))
        assert np.array_equal(out, g)
        a = degrade(g, DegradationSpec(kind, 0.6, seed=2))
        b = degrade(g, DegradationSpec(kind, 0.6, seed=2))
        assert np.array_equal(a, b)
        assert np.all(a >= 0) and np.all(np.isfinite(a))


def test_degradation_monotone_under_similarity():
    lo, hi = 0.25, 0.75
    for kind in DegradationKind:
        sims_lo, sims_hi, klds_lo, klds_hi = [], [], [], []
        for seed in range(50):
            fix = gen_fixations(100 + seed, 35, 40, 40, 7.0)
            g = fixations_to_gsm(fix, 2.5, 40, 40)
            a = degrade(g, DegradationSpec(kind, lo, seed=seed))
            b = degrade(g, DegradationSpec(kind, hi, seed=seed))
            sims_lo.append(sim(prepare_pair(a, g)))
            sims_hi.append(sim(prepare_pair(b, g)))
            klds_lo.append(kld_sym(prepare_pair(a, g)))
            klds_hi.append(kld_sym(prepare_pair(b, g)))
        assert np.mean(sims_hi) < np.mean(sims_lo), kind
        assert np.mean(klds_hi) > np.mean(klds_lo), kind


def test_random_map_statistics():
    a = random_map(9, 32, 32)
    assert np.array_equal(a, random_map(9, 32, 32))
    m = random_map(10, 256, 256)
    assert 0.48 <= m.mean() <= 0.52
    assert 0.0 <= m.min() and m.max() <= 1.0
    other = random_map(11, 256, 256)
    assert abs(cc(prepare_pair(m, other))) < 0.1


def test_avg_map():
    sets = [gen_fixations(s, 30, 32, 32, 4.0, f"i{s}") for s in range(4)]
    single = avg_map(sets[:1], 32, 32, 2.0)
    assert np.allclose(single, fixations_to_gsm(sets[0], 2.0, 32, 32))
    # oracle: independent accumulation of the per-image normalized maps
    acc = np.zeros((32, 32))
    for s in sets:
        acc += fixations_to_gsm(s, 2.0, 32, 32)
    acc /= len(sets)
    expect = (acc - acc.min()) / (acc.max() - acc.min())
    assert np.allclose(avg_map(sets, 32, 32, 2.0), expect, atol=1e-12)
    with pytest.raises(EmptyInput):
        avg_map([], 32, 32, 2.0)


def test_simulate_answers_limits_and_determinism():
    g = fixations_to_gsm(gen_fixations(1, 30, 32, 32, 5.0), 2.0, 32, 32)
    a = degrade(g, DegradationSpec(DegradationKind.BLUR, 0.2, seed=0))
    b = degrade(g, DegradationSpec(DegradationKind.NOISE, 0.8, seed=0))
    quality = lambda e, gt: sim(prepare_pair(e, gt))
    hard = AnnotatorModel(16, beta=float("inf"), seed=0)
    answers = simulate_answers(a, b, g, hard, quality)
    assert all(ans.chose_a for ans in answers)
    l = sum(ans.chose_a for ans in answers) / len(answers)
    assert (l, 2 * abs(l - 0.5)) == (1.0, 1.0)

    soft = AnnotatorModel(400, beta=8.0, seed=1)
    same = simulate_answers(g, g, g, soft, quality)
    l = sum(ans.chose_a for ans in same) / len(same)
    assert abs(l - 0.5) < 0.08

    again = simulate_answers(a, b, g, AnnotatorModel(16, 8.0, 3), quality, question_salt=7)
    again2 = simulate_answers(a, b, g, AnnotatorModel(16, 8.0, 3), quality, question_salt=7)
    assert again == again2
    # oracle annotators make the quality function itself a perfect predictor
    rec = JudgmentRecord(0, "img", "A", "B", "G", answers)
    from salbench.judgments import JudgmentDataset, metric_accuracy
    from salbench.metrics import Polarity

    ds = JudgmentDataset((rec,))
    scores = {(0, "a"): quality(a, g), (0, "b"): quality(b, g)}
    assert metric_accuracy(Polarity.HIGHER_BETTER, scores, ds) == 1.0
