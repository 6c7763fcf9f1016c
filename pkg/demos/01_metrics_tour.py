"""Tour of the ten classic saliency metrics on a synthetic scene.

Builds a ground-truth map from simulated fixations, derives a ladder of
increasingly damaged predictions, and scores every (prediction, truth) pair
with all ten metrics. Watch the similarity metrics fall and the divergence
metrics rise as the damage grows.
"""

from salbench.maps import prepare_pair
from salbench.metrics import EvalContext, MetricId, default_baseline, evaluate_all
from salbench.synth import (
    DegradationKind,
    DegradationSpec,
    degrade,
    fixations_to_gsm,
    gen_fixations,
    random_map,
)

W = H = 48

# a small "dataset" of five images so the sampling metrics have context
fixations = {
    f"img{i}": gen_fixations(seed=i, n_points=40, w=W, h=H, center_bias_sigma=9.0, image_id=f"img{i}")
    for i in range(5)
}
ctx = EvalContext(
    dataset_fixations=fixations,
    baseline=default_baseline(fixations, W, H),
    rng_seed=0,
    emd_grid_res=16,
)

fix = fixations["img0"]
gsm = fixations_to_gsm(fix, sigma=2.5, w=W, h=H)

candidates = {
    "truth itself": gsm,
    "light blur": degrade(gsm, DegradationSpec(DegradationKind.BLUR, 0.25, seed=1)),
    "heavy blur": degrade(gsm, DegradationSpec(DegradationKind.BLUR, 0.75, seed=1)),
    "noisy": degrade(gsm, DegradationSpec(DegradationKind.NOISE, 0.6, seed=1)),
    "shifted": degrade(gsm, DegradationSpec(DegradationKind.SHIFT, 0.5, seed=1)),
    "random map": random_map(2, W, H),
}

header = "prediction".ljust(14) + "".join(m.value.rjust(9) for m in MetricId)
print(header)
print("-" * len(header))
for name, esm in candidates.items():
    results = evaluate_all(prepare_pair(esm, gsm), fix, ctx)
    cells = []
    for mid in MetricId:
        r = results[mid]
        cells.append(("err" if r.score is None else f"{r.score:.3f}").rjust(9))
    print(name.ljust(14) + "".join(cells))

print()
print("AUC/SIM/CC/NSS/IG/PRE higher is better; KLD and EMD lower is better.")
