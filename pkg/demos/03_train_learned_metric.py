"""Train the learned perceptual metric end to end at toy scale.

Generates a small degradation-ladder benchmark, trains the two-stream
regressor on its simulated judgments (with anchor pairs and swap
augmentation), and inspects what the metric learned: held-out prediction
accuracy and the score ladder from ground truth down to a random map.

Takes a couple of minutes on one core. Pass --quick for a smoke run.
"""

import sys
import tempfile
from pathlib import Path

from salbench import bench, cpj
from salbench.judgments import JudgmentDataset

QUICK = "--quick" in sys.argv

workdir = Path(tempfile.mkdtemp(prefix="cpj_demo_"))
n_images = 8 if QUICK else 24
manifest_path = bench.generate_benchmark(
    workdir, seed=11, n_images=n_images, width=48, height=48, n_subjects=16, beta=8.0
)
man = bench.load_manifest(manifest_path)
print(f"benchmark at {workdir} ({n_images} images, {len(man.judgments())} questions)")

split = int(0.75 * n_images)
train_imgs = set(man.image_ids[:split])
test_imgs = sorted(set(man.image_ids[split:]))
ds = man.judgments()
train_ds = JudgmentDataset(tuple(r for r in ds.records if r.image_id in train_imgs))
test_ds = JudgmentDataset(tuple(r for r in ds.records if r.image_id in test_imgs))

config = cpj.CpjConfig(
    input_res=32,
    width_multiplier=1 / 16,
    fc_dims=(64, 64, 1),
    seed=0,
    learning_rate=0.02 if QUICK else 0.01,
    batch_size=32,
    max_iterations=800 if QUICK else 2500,
    plateau_patience=2000,
)
net = cpj.init_network(config)
triplets = bench.dataset_triplets(man, train_ds)
print(f"training on {len(triplets)} triplets (swap augmentation doubles the non-anchors)...")
net, history = cpj.train(net, triplets, config)
for it, mean_loss, lr in history.rows[:: max(1, len(history.rows) // 6)]:
    print(f"  iter {it:5d}  loss {mean_loss:.4f}  lr {lr:g}")

maps = bench._manifest_maps(man)
acc = cpj.pairwise_accuracy(net, test_ds, maps)
print(f"\nheld-out confidence-weighted accuracy: {acc:.3f}")

print("\nscore ladder on held-out images (mean over images):")
gsms = {i: man.load_gsm(i) for i in test_imgs}
rows = [("ground truth vs itself", [(gsms[i], gsms[i]) for i in test_imgs])]
for model in [m for m in man.model_ids if m != bench.GSM_ID]:
    rows.append((model, [(maps[(model, i)], gsms[i]) for i in test_imgs]))
scored = [(name, float(cpj.score_many(net, pairs).mean())) for name, pairs in rows]
for name, value in sorted(scored, key=lambda kv: -kv[1]):
    print(f"  {value:.3f}  {name}")

ckpt = workdir / "cpj.ckpt"
cpj.save_checkpoint(net, ckpt)
print(f"\ncheckpoint written to {ckpt}")
