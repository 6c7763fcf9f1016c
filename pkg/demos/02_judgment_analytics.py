"""From simulated pairwise judgments to the three headline analyses.

Simulated annotators compare pairs of degraded maps (preferring the one with
higher histogram intersection, plus logistic noise). We then compute the
confidence distribution, inter-subject agreement as a function of subgroup
size, and each metric's accuracy at predicting the majority ordering.
"""

import numpy as np

from salbench.judgments import (
    JudgmentDataset,
    JudgmentRecord,
    confidence_histogram,
    consistent_fraction,
    human_reference_ranking,
    inter_subject_agreement,
    metric_accuracy,
)
from salbench.maps import prepare_pair
from salbench.metrics import MetricId, cc, kld_sym, sim
from salbench.synth import (
    AnnotatorModel,
    DegradationKind,
    DegradationSpec,
    degrade,
    fixations_to_gsm,
    gen_fixations,
    simulate_answers,
)

W = H = 40
MODELS = {
    "blur_lo": DegradationSpec(DegradationKind.BLUR, 0.3, 0),
    "blur_hi": DegradationSpec(DegradationKind.BLUR, 0.7, 0),
    "noise": DegradationSpec(DegradationKind.NOISE, 0.55, 0),
    "dropout": DegradationSpec(DegradationKind.DROPOUT, 0.5, 0),
}
quality = lambda e, g: sim(prepare_pair(e, g))
annotators = AnnotatorModel(n_subjects=16, beta=8.0, seed=0)

records = []
per_side_scores = {}
qid = 0
for i in range(12):
    fix = gen_fixations(100 + i, 35, W, H, 8.0, f"img{i}")
    gsm = fixations_to_gsm(fix, 2.5, W, H)
    esms = {name: degrade(gsm, spec) for name, spec in MODELS.items()}
    names = sorted(esms)
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            ma, mb = names[a], names[b]
            answers = simulate_answers(esms[ma], esms[mb], gsm, annotators, quality, qid)
            records.append(JudgmentRecord(qid, f"img{i}", ma, mb, "GSM", answers))
            for side, esm in (("a", esms[ma]), ("b", esms[mb])):
                pair = prepare_pair(esm, gsm)
                per_side_scores.setdefault("SIM", {})[(qid, side)] = sim(pair)
                per_side_scores.setdefault("CC", {})[(qid, side)] = cc(pair)
                per_side_scores.setdefault("KLD", {})[(qid, side)] = kld_sym(pair)
            qid += 1

dataset = JudgmentDataset(tuple(records))
print(f"{len(dataset)} questions, {len(dataset.subjects)} subjects")

counts, edges = confidence_histogram(dataset, bins=4)
print("confidence histogram:", dict(zip(np.round(edges[:-1], 2).tolist(), counts.tolist())))
print(f"consistent annotations (c >= 0.25): {consistent_fraction(dataset):.1%}")

print("\ninter-subject agreement by subgroup size:")
for t in range(1, len(dataset.subjects) // 2 + 1):
    alpha = inter_subject_agreement(dataset, t, mode="auto")
    print(f"  t={t}: alpha = {alpha:.3f}")

print("\nmetric accuracy against the majority ordering:")
for name, mid in (("SIM", MetricId.SIM), ("CC", MetricId.CC), ("KLD", MetricId.KLD)):
    p = metric_accuracy(mid, per_side_scores[name], dataset)
    print(f"  {name}: {p:.3f}")

print("\nhuman reference ranking (confidence-weighted wins):")
for pos, (model, wins) in enumerate(human_reference_ranking(dataset).entries, 1):
    print(f"  {pos}. {model} ({wins:.1f})")
