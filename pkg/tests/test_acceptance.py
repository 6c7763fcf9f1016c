"""Acceptance criteria, one test per criterion.

Every test prints one `[criterion] PASS/FAIL` line (run with `pytest -s -v`
to watch them live). The learning suite trains the reduced-scale network and
is the slow part; the full module takes on the order of ten minutes on two
cores.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from salbench import bench, cpj
from salbench.cli import main as cli_main
from salbench.judgments import (
    Answer,
    JudgmentDataset,
    JudgmentRecord,
    ModelRanking,
    derive_scores,
    inconsistent_pairs,
    inter_subject_agreement,
    metric_accuracy,
)
from salbench.maps import FixationSet, MapPair, prepare_pair
from salbench.metrics import (
    EvalContext,
    Polarity,
    auc_judd,
    cc,
    emd,
    kld_sym,
    nss,
    resampled_auc,
    shuffled_auc,
    sim,
)
from salbench.synth import (
    DegradationKind,
    DegradationSpec,
    degrade,
    fixations_to_gsm,
    gen_fixations,
    random_map,
)

from oracles import (
    agreement_naive,
    auc_judd_naive,
    cc_naive,
    grid_emd_exact,
    kld_sym_naive,
    sim_naive,
)

ACCEPT_CONFIG = dict(input_res=32, width_multiplier=1 / 16, fc_dims=(64, 64, 1))


def report(name: str, ok: bool, detail: str = ""):
    print(f"[{name}] {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# 1. Metric oracle suite.
# ---------------------------------------------------------------------------


def test_metric_oracle_suite():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for trial in range(100):
        h, w = rng.integers(2, 5, 2)
        s = rng.random((h, w))
        g = rng.random((h, w))
        n_fix = int(rng.integers(1, h * w))
        flat = rng.choice(h * w, n_fix, replace=False)
        pts = [(int(f % w), int(f // w)) for f in flat]
        fix = FixationSet("i", pts)
        pair = MapPair(s, g)
        diffs = [
            abs(auc_judd(pair, fix) - auc_judd_naive(s.tolist(), pts)),
            abs(sim(pair) - sim_naive(s.tolist(), g.tolist())),
            abs(kld_sym(pair) - kld_sym_naive(s.tolist(), g.tolist())),
        ]
        if s.std() > 0 and g.std() > 0:
            diffs.append(abs(cc(pair) - cc_naive(s.tolist(), g.tolist())))
        p3 = rng.random((3, 3))
        q3 = rng.random((3, 3))
        got = emd(MapPair(p3, q3), grid_res=3)
        expect = grid_emd_exact((p3 / p3.sum()).tolist(), (q3 / q3.sum()).tolist())
        diffs.append(abs(got - expect))
        worst = max(worst, max(diffs))
    elapsed = time.time() - t0
    report(
        "metric-oracle-suite",
        worst < 1e-9 and elapsed < 60,
        f"max |impl - oracle| = {worst:.2e} over 100 instances in {elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 2. Degenerate contracts.
# ---------------------------------------------------------------------------


def test_degenerate_contracts():
    fix = gen_fixations(1, 25, 24, 24, 4.0, "img")
    g = fixations_to_gsm(fix, 2.0, 24, 24)
    pair = prepare_pair(g, g)
    perfect_ok = (
        abs(sim(pair) - 1.0) < 1e-9
        and abs(cc(pair) - 1.0) < 1e-9
        and abs(kld_sym(pair)) < 1e-9
        and abs(emd(pair, grid_res=8)) < 1e-9
    )
    s = np.zeros((24, 24))
    s[fix.points[:, 1], fix.points[:, 0]] = 1.0
    perfect_ok = perfect_ok and auc_judd(MapPair(s, g), fix) == 1.0

    const_pair = prepare_pair(np.full((24, 24), 0.7), g)
    const_auc = auc_judd(const_pair, fix)
    nss_raised = False
    try:
        nss(const_pair, fix)
    except Exception as e:
        nss_raised = type(e).__name__ == "ZeroVariance"
    report(
        "degenerate-contracts",
        perfect_ok and abs(const_auc - 0.5) < 1e-9 and nss_raised,
        f"perfect metrics exact, constant AUC={const_auc}, NSS ZeroVariance={nss_raised}",
    )


# ---------------------------------------------------------------------------
# 3. Invariance suite (500 seeded trials).
# ---------------------------------------------------------------------------


def _context_for(seed: int, w: int, h: int) -> tuple[EvalContext, FixationSet]:
    fixations = {
        f"img{i}": gen_fixations(seed * 13 + i, 15, w, h, 0.2 * w, f"img{i}") for i in range(4)
    }
    return EvalContext(dataset_fixations=fixations, rng_seed=seed), fixations["img0"]


def test_invariance_suite():
    t0 = time.time()
    worst = 0.0
    trials = 0
    rng = np.random.default_rng(7)

    # 200 trials: ordering metrics under strictly increasing transforms
    for seed in range(200):
        w = h = 12
        ctx, fix = _context_for(seed, w, h)
        g = fixations_to_gsm(fix, 1.5, w, h)
        s = rng.random((h, w))
        pair = MapPair(s, g)
        warped = MapPair(np.exp(1.7 * s) - 0.5, g)
        worst = max(worst, abs(auc_judd(pair, fix) - auc_judd(warped, fix)))
        worst = max(worst, abs(shuffled_auc(pair, fix, ctx) - shuffled_auc(warped, fix, ctx)))
        worst = max(worst, abs(resampled_auc(pair, fix, ctx) - resampled_auc(warped, fix, ctx)))
        trials += 1

    # 150 trials: affine invariance of NSS and CC
    for seed in range(150):
        s = rng.random((10, 10))
        g = rng.random((10, 10))
        fix = FixationSet("i", rng.integers(0, 10, (5, 2)))
        a = float(rng.uniform(0.2, 5.0))
        b = float(rng.uniform(-2.0, 2.0))
        pair = MapPair(s, g)
        scaled = MapPair(a * s + b, g)
        worst = max(worst, abs(nss(pair, fix) - nss(scaled, fix)))
        worst = max(worst, abs(cc(pair) - cc(scaled)))
        trials += 1

    # 150 trials: scale invariance of the distribution metrics
    for seed in range(150):
        s = rng.random((6, 6))
        g = rng.random((6, 6))
        k = float(rng.uniform(0.1, 40.0))
        pair = MapPair(s, g)
        scaled = MapPair(k * s, g)
        worst = max(worst, abs(sim(pair) - sim(scaled)))
        worst = max(worst, abs(kld_sym(pair) - kld_sym(scaled)))
        if seed < 50:
            worst = max(worst, abs(emd(pair, 4) - emd(scaled, 4)))
        trials += 1

    elapsed = time.time() - t0
    report(
        "invariance-suite",
        worst < 1e-9 and trials == 500 and elapsed < 120,
        f"max drift {worst:.2e} over {trials} trials in {elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 4. Judgment-formula exactness and swap invariance.
# ---------------------------------------------------------------------------


def _record(qid, n_a, n_total, a="A", b="B"):
    answers = tuple(Answer(f"s{i}", i < n_a, 5000) for i in range(n_total))
    return JudgmentRecord(qid, "img", a, b, "G", answers)


def test_judgment_formula_exactness():
    ok = derive_scores(_record(0, 12, 16)) == (0.75, 0.5, 0.5)
    ok = ok and derive_scores(_record(1, 3, 4)) == (0.75, 0.5, 0.5)
    ok = ok and derive_scores(_record(2, 2, 4)) == (0.5, 0.0, 0.0)

    # prediction accuracy on the three-record fixture: P = 1/1.5
    ds = JudgmentDataset((_record(0, 4, 4), _record(1, 3, 4), _record(2, 2, 4)))
    scores = {(0, "a"): 0.9, (0, "b"): 0.1, (1, "a"): 0.2, (1, "b"): 0.7, (2, "a"): 0.5, (2, "b"): 0.4}
    p = metric_accuracy(Polarity.HIGHER_BETTER, scores, ds)
    ok = ok and p == float(Fraction(2, 3))

    # subgroup agreement on a 4-subject hand fixture vs exhaustive enumeration
    rng = np.random.default_rng(99)
    rows = (rng.random((4, 5)) < 0.5).tolist()
    records = tuple(
        JudgmentRecord(k, "img", "A", "B", "G",
                       tuple(Answer(f"s{i}", rows[i][k], 5000) for i in range(4)))
        for k in range(5)
    )
    ds4 = JudgmentDataset(records)
    for t in (1, 2):
        ok = ok and inter_subject_agreement(ds4, t, mode="exact") == pytest.approx(
            agreement_naive(rows, t), abs=1e-15
        )

    # inconsistent_pairs on hand rankings
    r_abc = ModelRanking((("A", 0.0), ("B", 0.0), ("C", 0.0)))
    r_bac = ModelRanking((("B", 0.0), ("A", 0.0), ("C", 0.0)))
    ok = ok and inconsistent_pairs(r_abc, r_abc) == 0
    ok = ok and inconsistent_pairs(r_abc, r_bac) == 1

    # swap invariance on 100 randomized datasets
    drift = 0.0
    for trial in range(100):
        n_sub = int(rng.integers(2, 5))
        n_q = int(rng.integers(2, 6))
        rows = (rng.random((n_sub, n_q)) < rng.uniform(0.2, 0.8)).tolist()
        records = tuple(
            JudgmentRecord(k, "img", "A", "B", "G",
                           tuple(Answer(f"s{i}", rows[i][k], 5000) for i in range(n_sub)))
            for k in range(n_q)
        )
        dset = JudgmentDataset(records)
        swapped = JudgmentDataset(tuple(r.swapped() for r in dset.records))
        sc = {}
        for rec in dset.records:
            sc[(rec.question_id, "a")] = float(rng.random())
            sc[(rec.question_id, "b")] = float(rng.random())
        sc_swap = {(q, "b" if side == "a" else "a"): v for (q, side), v in sc.items()}
        try:
            drift = max(
                drift,
                abs(metric_accuracy(Polarity.HIGHER_BETTER, sc, dset)
                    - metric_accuracy(Polarity.HIGHER_BETTER, sc_swap, swapped)),
            )
        except Exception:
            pass  # all-confidence-zero draws
        t = 1
        drift = max(
            drift,
            abs(inter_subject_agreement(dset, t, mode="exact")
                - inter_subject_agreement(swapped, t, mode="exact")),
        )
    report(
        "judgment-formula-exactness",
        ok and drift < 1e-12,  # one-ulp noise from recomputing c via 1 - l
        f"fixtures exact, swap drift {drift:.1e} over 100 datasets",
    )


# ---------------------------------------------------------------------------
# 5. CPJ structural suite.
# ---------------------------------------------------------------------------


def test_cpj_structural_suite():
    t0 = time.time()
    net = cpj.init_network(cpj.CpjConfig(seed=5, **ACCEPT_CONFIG))
    rng = np.random.default_rng(17)
    worst = 0.0
    in_range = True
    for _ in range(100):
        a = rng.random((28, 28))
        b = rng.random((28, 28))
        g = rng.random((28, 28))
        d1 = cpj.forward_pair(net, a, b, g)
        d2 = cpj.forward_pair(net, b, a, g)
        worst = max(worst, abs(d1 + d2))
        s = cpj.score(net, a, g)
        in_range = in_range and 0.0 < s < 1.0

    net64 = cpj.init_network(
        cpj.CpjConfig(input_res=32, width_multiplier=1 / 16, fc_dims=(16, 16, 1), seed=2),
        dtype=np.float64,
    )
    fix = gen_fixations(3, 30, 40, 40, 7.0)
    g = fixations_to_gsm(fix, 2.5, 40, 40)
    batch = [
        cpj.TrainingTriplet(
            degrade(g, DegradationSpec(DegradationKind.BLUR, 0.3, 1)),
            degrade(g, DegradationSpec(DegradationKind.NOISE, 0.7, 1)),
            g,
            r=0.5,
        ),
        cpj.TrainingTriplet(g, random_map(4, 40, 40), g, r=1.0, is_anchor=True),
    ]
    max_rel, checked, skipped = cpj.gradient_check(net64, batch, n_probes=96, h=1e-4, seed=0)
    elapsed = time.time() - t0
    report(
        "cpj-structural-suite",
        worst < 1e-12 and in_range and max_rel < 1e-4 and checked >= 32 and elapsed < 120,
        f"antisym {worst:.1e}, gradcheck rel {max_rel:.2e} ({checked} probes, {skipped} kink-skips), {elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 6. CPJ learning suite (the slow one).
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def ladder_benchmark(tmp_path_factory):
    out = tmp_path_factory.mktemp("ladder")
    manifest = bench.generate_benchmark(
        out, seed=11, n_images=40, width=48, height=48, n_subjects=16, beta=8.0, emd_grid_res=16
    )
    return bench.load_manifest(manifest)


def test_cpj_learning_suite(ladder_benchmark):
    t0 = time.time()
    man = ladder_benchmark

    # (i) overfit 20 triplets to >= 95% ordering accuracy within 5000 iterations
    trips = []
    for i in range(10):
        fix = gen_fixations(300 + i, 40, 48, 48, 9.0, f"of{i}")
        g = fixations_to_gsm(fix, 2.5, 48, 48)
        a = degrade(g, DegradationSpec(DegradationKind.BLUR, 0.25, seed=i))
        b = degrade(g, DegradationSpec(DegradationKind.NOISE, 0.8, seed=i))
        trips.append(cpj.TrainingTriplet(a, b, g, r=0.75))
        trips.append(cpj.TrainingTriplet(g, random_map(600 + i, 48, 48), g, r=1.0, is_anchor=True))
    overfit_cfg = cpj.CpjConfig(
        seed=5, learning_rate=0.02, batch_size=20, max_iterations=1500,
        plateau_patience=1500, **ACCEPT_CONFIG
    )
    net = cpj.init_network(overfit_cfg)
    net, _ = cpj.train(net, trips, overfit_cfg)
    correct = sum(
        1 for t in trips if np.sign(cpj.forward_pair(net, t.a, t.b, t.g)) == np.sign(t.r)
    )
    overfit_acc = correct / len(trips)

    # (ii) degradation-ladder benchmark: train on 30 images, hold out 10
    ds = man.judgments()
    train_imgs = set(man.image_ids[:30])
    test_imgs = sorted(set(man.image_ids[30:]))
    train_ds = JudgmentDataset(tuple(r for r in ds.records if r.image_id in train_imgs))
    test_ds = JudgmentDataset(tuple(r for r in ds.records if r.image_id in test_imgs))
    ladder_cfg = cpj.CpjConfig(
        seed=0, learning_rate=0.01, batch_size=32, max_iterations=2500,
        plateau_patience=2000, **ACCEPT_CONFIG
    )
    net2 = cpj.init_network(ladder_cfg)
    net2, _ = cpj.train(net2, bench.dataset_triplets(man, train_ds), ladder_cfg)
    maps = bench._manifest_maps(man)
    heldout_acc = cpj.pairwise_accuracy(net2, test_ds, maps)

    gsms = [man.load_gsm(i) for i in test_imgs]
    esms = [maps[("m3_noise", i)] for i in test_imgs]
    rnds = [maps[(bench.RND_ID, i)] for i in test_imgs]
    frac_ge, frac_er = cpj.anchor_ordering_fractions(net2, gsms, esms, rnds)

    elapsed = time.time() - t0
    report(
        "cpj-learning-suite",
        overfit_acc >= 0.95 and heldout_acc >= 0.80 and frac_ge >= 0.95 and frac_er >= 0.95
        and elapsed < 1200,
        f"overfit {overfit_acc:.2f}, heldout {heldout_acc:.3f}, "
        f"anchors G>E {frac_ge:.2f} E>R {frac_er:.2f}, {elapsed / 60:.1f} min",
    )


# ---------------------------------------------------------------------------
# 7. Chance calibration of the untrained metric.
# ---------------------------------------------------------------------------


def test_chance_calibration(ladder_benchmark):
    t0 = time.time()
    man = ladder_benchmark
    ds = man.judgments()
    test_imgs = set(man.image_ids[30:])
    base = JudgmentDataset(tuple(r for r in ds.records if r.image_id in test_imgs))
    maps = bench._manifest_maps(man)
    accs = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        balanced = JudgmentDataset(
            tuple(r.swapped() if rng.random() < 0.5 else r for r in base.records)
        )
        net = cpj.init_network(cpj.CpjConfig(seed=seed, **ACCEPT_CONFIG))
        accs.append(cpj.pairwise_accuracy(net, balanced, maps))
    mean_acc = float(np.mean(accs))
    elapsed = time.time() - t0
    report(
        "chance-calibration",
        abs(mean_acc - 0.5) < 0.1 and elapsed < 300,
        f"untrained accuracy {mean_acc:.3f} (per-seed {min(accs):.2f}..{max(accs):.2f}) in {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# 8. Determinism of the CLI commands.
# ---------------------------------------------------------------------------


def test_cli_determinism(tmp_path):
    trees = []
    for name in ("s1", "s2"):
        out = tmp_path / name
        assert cli_main(["synth", "--out", str(out), "--seed", "21", "--images", "2",
                         "--width", "24", "--height", "24", "--subjects", "4",
                         "--emd-grid", "8"]) == 0
        trees.append({
            str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()
        })
    synth_ok = trees[0] == trees[1]

    manifest = str(tmp_path / "s1" / "manifest.json")
    evals = []
    for name in ("e1", "e2"):
        out = tmp_path / name
        assert cli_main(["eval", "--manifest", manifest, "--out", str(out)]) == 0
        evals.append((out / "scores.csv").read_bytes())
    eval_ok = evals[0] == evals[1]

    cfg = (
        '{"input_res": 32, "width_multiplier": 0.0625, "fc_dims": [8, 8, 1],'
        ' "batch_size": 8, "max_iterations": 25}'
    )
    ckpts = []
    for name in ("t1", "t2"):
        out = tmp_path / name
        assert cli_main(["train", "--manifest", manifest, "--out", str(out),
                         "--config", cfg, "--seed", "3"]) == 0
        ckpts.append((out / "cpj.ckpt").read_bytes() + (out / "history.csv").read_bytes())
    train_ok = ckpts[0] == ckpts[1]

    report(
        "cli-determinism",
        synth_ok and eval_ok and train_ok,
        f"synth={synth_ok} eval={eval_ok} train={train_ok}",
    )


# ---------------------------------------------------------------------------
# 9. [SECONDARY] Protocol enforcement through the HTTP surface.
# ---------------------------------------------------------------------------


def test_protocol_enforcement(tmp_path):
    from fastapi.testclient import TestClient

    from salbench.service import MIN_VIEW_MS, create_app

    out = tmp_path / "svc"
    manifest = bench.generate_benchmark(out, seed=13, n_images=1, width=24, height=24, n_subjects=2)
    man = bench.load_manifest(manifest)

    class Clock:
        now = 5_000_000

        def __call__(self):
            return self.now

    clock = Clock()
    app = create_app(man, tmp_path / "log.jsonl", seed=99, clock=clock)
    client = TestClient(app)
    state = app.state.annotation

    # scripted canonical choices: 2 subjects x 10 questions
    script = {}
    rng = np.random.default_rng(123)
    token = {}
    for subject in ("p0", "p1"):
        token[subject] = client.post("/session", json={"subject_id": subject}).json()["token"]
        for _ in range(10):
            q = client.get("/question", params={"token": token[subject]}).json()
            qid = q["question_id"]
            want_a = bool(rng.random() < 0.5)
            script[(subject, qid)] = want_a
            # early submission must bounce with 422
            clock.now += MIN_VIEW_MS - 1
            early = client.post("/answer", params={"token": token[subject]},
                                json={"question_id": qid, "choice": "left"})
            assert early.status_code == 422
            clock.now += 1  # unlock at exactly 5 s
            choice = "right" if want_a == state.swapped_for(subject, qid) else "left"
            ok = client.post("/answer", params={"token": token[subject]},
                             json={"question_id": qid, "choice": choice})
            assert ok.status_code == 200
            dup = client.post("/answer", params={"token": token[subject]},
                              json={"question_id": qid, "choice": choice})
            assert dup.status_code == 409

    lines = [l for l in client.get("/export").text.splitlines() if l]
    import json as _json

    matches = 0
    total = 0
    for line in lines:
        obj = _json.loads(line)
        for a in obj["answers"]:
            total += 1
            matches += a["chose_a"] == script[(a["subject"], obj["q"])]
            assert a["elapsed_ms"] >= MIN_VIEW_MS
    report(
        "protocol-enforcement",
        total == 20 and matches == total,
        f"{matches}/{total} scripted choices round-tripped; 422/409 enforced",
    )
