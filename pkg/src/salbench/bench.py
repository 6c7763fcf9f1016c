"""Benchmark generation and report orchestration behind the CLI.

A benchmark directory is self-contained: maps (FR32 + PGM stimulus),
fixation CSVs, a JSON-lines judgment file and a manifest tying them
together with the evaluation-context parameters. Reports are CSV tables
plus JSON metadata, written atomically and byte-stable for a fixed seed.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cpj
from .errors import MalformedFile, MissingScores, ZeroTotalConfidence
from .judgments import (
    JudgmentDataset,
    JudgmentRecord,
    derive_scores,
    human_reference_ranking,
    inconsistent_pairs,
    inter_subject_agreement,
    load_dataset,
    metric_accuracy,
    rank_models,
    save_dataset,
)
from .maps import FixationSet, load_fixations, load_map, prepare_pair, save_fixations, save_map
from .metrics import EvalContext, MetricId, default_baseline, evaluate_all
from .synth import (
    AnnotatorModel,
    DegradationKind,
    DegradationSpec,
    avg_map,
    degrade,
    fixations_to_gsm,
    gen_fixations,
    random_map,
    simulate_answers,
)

GSM_ID = "GSM"
RND_ID = "RND"

# seven stand-in models: the dataset-average map plus six graded degradations
MODEL_LADDER: tuple[tuple[str, DegradationKind | None, float], ...] = (
    ("m0_avg", None, 0.0),
    ("m1_blur_lo", DegradationKind.BLUR, 0.3),
    ("m2_blur_hi", DegradationKind.BLUR, 0.7),
    ("m3_noise", DegradationKind.NOISE, 0.55),
    ("m4_shift", DegradationKind.SHIFT, 0.5),
    ("m5_dropout", DegradationKind.DROPOUT, 0.5),
    ("m6_border", DegradationKind.BORDER_POP, 0.6),
)


def worker_count() -> int:
    env = os.environ.get("SALBENCH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# Manifest.
# ---------------------------------------------------------------------------


@dataclass
class Manifest:
    root: Path
    width: int
    height: int
    image_ids: list[str]
    gsm_files: dict[str, str]
    fixation_files: dict[str, str]
    stimulus_files: dict[str, str]
    model_ids: list[str]
    model_maps: dict[str, dict[str, str]]  # model -> image -> relative path
    judgments_file: str
    eval_params: dict = field(default_factory=dict)

    def path(self, rel: str) -> Path:
        return self.root / rel

    def load_gsm(self, image_id: str) -> np.ndarray:
        return load_map(self.path(self.gsm_files[image_id]))

    def load_model_map(self, model_id: str, image_id: str) -> np.ndarray:
        return load_map(self.path(self.model_maps[model_id][image_id]))

    def load_fixations(self, image_id: str) -> FixationSet:
        return load_fixations(
            self.path(self.fixation_files[image_id]), image_id, (self.width, self.height)
        )

    def dataset_fixations(self) -> dict[str, FixationSet]:
        return {i: self.load_fixations(i) for i in self.image_ids}

    def eval_context(self, seed: int | None = None) -> EvalContext:
        params = self.eval_params
        fixations = self.dataset_fixations()
        return EvalContext(
            dataset_fixations=fixations,
            baseline=default_baseline(fixations, self.width, self.height),
            rng_seed=int(params.get("seed", 0)) if seed is None else seed,
            rauc_low_quantile=float(params.get("rauc_low_quantile", 0.25)),
            emd_grid_res=int(params.get("emd_grid_res", 32)),
        )

    def judgments(self) -> JudgmentDataset:
        return load_dataset(self.path(self.judgments_file))


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except (OSError, ValueError) as e:
        raise MalformedFile(f"{path}: {e}") from e
    try:
        man = Manifest(
            root=path.parent,
            width=int(obj["width"]),
            height=int(obj["height"]),
            image_ids=[img["id"] for img in obj["images"]],
            gsm_files={img["id"]: img["gsm"] for img in obj["images"]},
            fixation_files={img["id"]: img["fixations"] for img in obj["images"]},
            stimulus_files={img["id"]: img["stimulus"] for img in obj["images"]},
            model_ids=[m["id"] for m in obj["models"]],
            model_maps={m["id"]: dict(m["maps"]) for m in obj["models"]},
            judgments_file=obj["judgments"],
            eval_params=dict(obj.get("eval", {})),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedFile(f"{path}: missing or invalid field ({e})") from e
    if len(set(man.image_ids)) != len(man.image_ids) or len(set(man.model_ids)) != len(man.model_ids):
        raise MalformedFile(f"{path}: duplicate image or model ids")
    for rel in _all_referenced(man):
        if not man.path(rel).exists():
            raise MalformedFile(f"{path}: referenced file missing: {rel}")
    return man


def _all_referenced(man: Manifest):
    yield from man.gsm_files.values()
    yield from man.fixation_files.values()
    yield from man.stimulus_files.values()
    for maps_by_image in man.model_maps.values():
        yield from maps_by_image.values()
    yield man.judgments_file


# ---------------------------------------------------------------------------
# Synthetic benchmark generation.
# ---------------------------------------------------------------------------


def generate_benchmark(
    out_dir,
    seed: int = 0,
    n_images: int = 16,
    width: int = 48,
    height: int = 48,
    n_subjects: int = 16,
    beta: float = 8.0,
    n_points: int = 40,
    gsm_sigma: float = 2.5,
    center_bias_sigma: float | None = None,
    emd_grid_res: int = 16,
) -> Path:
    """Write a self-contained synthetic benchmark and return the manifest path."""
    out = Path(out_dir)
    (out / "maps").mkdir(parents=True, exist_ok=True)
    (out / "fixations").mkdir(exist_ok=True)
    cb_sigma = center_bias_sigma if center_bias_sigma is not None else 0.22 * min(width, height)

    image_ids = [f"img{i:03d}" for i in range(n_images)]
    fixations = {
        img: gen_fixations(seed * 100_003 + i, n_points, width, height, cb_sigma, img)
        for i, img in enumerate(image_ids)
    }
    gsms = {img: fixations_to_gsm(fixations[img], gsm_sigma, width, height) for img in image_ids}
    avg = avg_map(list(fixations.values()), width, height, gsm_sigma)
    stimulus = np.full((height, width), 0.5)  # flat gray display placeholder

    images_json = []
    model_maps: dict[str, dict[str, str]] = {m: {} for m, _, _ in MODEL_LADDER}
    model_maps[GSM_ID] = {}
    model_maps[RND_ID] = {}
    for i, img in enumerate(image_ids):
        gsm_rel = f"maps/{img}_gsm.fr32"
        save_map(gsms[img], out / gsm_rel)
        fix_rel = f"fixations/{img}.csv"
        save_fixations(fixations[img], out / fix_rel)
        stim_rel = f"maps/{img}_stimulus.pgm"
        save_map(stimulus, out / stim_rel)
        images_json.append({"id": img, "gsm": gsm_rel, "fixations": fix_rel, "stimulus": stim_rel})

        for model, kind, level in MODEL_LADDER:
            if kind is None:
                esm = avg
            else:
                esm = degrade(gsms[img], DegradationSpec(kind, level, seed=seed * 7919 + i))
            rel = f"maps/{img}_{model}.fr32"
            save_map(esm, out / rel)
            model_maps[model][img] = rel
        model_maps[GSM_ID][img] = gsm_rel
        rnd_rel = f"maps/{img}_rnd.fr32"
        save_map(random_map(seed * 104_729 + i, width, height), out / rnd_rel)
        model_maps[RND_ID][img] = rnd_rel

    records = _simulate_judgments(
        out, image_ids, model_maps, gsms, AnnotatorModel(n_subjects, beta, seed)
    )
    save_dataset(JudgmentDataset(tuple(records)), out / "judgments.jsonl")

    manifest = {
        "width": width,
        "height": height,
        "images": images_json,
        "models": [
            {"id": m, "maps": model_maps[m]}
            for m in [m for m, _, _ in MODEL_LADDER] + [GSM_ID, RND_ID]
        ],
        "judgments": "judgments.jsonl",
        "eval": {
            "seed": seed,
            "emd_grid_res": emd_grid_res,
            "rauc_low_quantile": 0.25,
            "provenance": {"seed": seed, "beta": beta, "subjects": n_subjects},
        },
    }
    manifest_path = out / "manifest.json"
    atomic_write_text(manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def _sim_quality(esm: np.ndarray, gsm: np.ndarray) -> float:
    from .metrics import sim

    return sim(prepare_pair(esm, gsm))


def _simulate_judgments(out, image_ids, model_maps, gsms, annotators: AnnotatorModel):
    records = []
    qid = 0
    ladder_ids = [m for m, _, _ in MODEL_LADDER]
    loaded = {
        (m, img): load_map(out / model_maps[m][img])
        for m in ladder_ids + [RND_ID]
        for img in image_ids
    }
    for img in image_ids:
        g = gsms[img]
        pairs = [
            (ladder_ids[i], ladder_ids[j])
            for i in range(len(ladder_ids))
            for j in range(i + 1, len(ladder_ids))
        ]
        for a_id, b_id in pairs:
            answers = simulate_answers(
                loaded[(a_id, img)], loaded[(b_id, img)], g, annotators, _sim_quality, qid
            )
            records.append(JudgmentRecord(qid, img, a_id, b_id, GSM_ID, answers))
            qid += 1
        answers = simulate_answers(g, loaded[(RND_ID, img)], g, annotators, _sim_quality, qid)
        records.append(JudgmentRecord(qid, img, GSM_ID, RND_ID, GSM_ID, answers))
        qid += 1
    return records


# ---------------------------------------------------------------------------
# Reports.
# ---------------------------------------------------------------------------


def parse_metric_list(spec: str | None) -> list[MetricId]:
    if not spec:
        return list(MetricId)
    out = []
    by_name = {m.value.lower(): m for m in MetricId}
    for token in spec.split(","):
        token = token.strip().lower()
        if token not in by_name:
            raise ValueError(f"unknown metric {token!r}")
        out.append(by_name[token])
    return out


def run_eval(
    manifest: Manifest, metric_ids: list[MetricId], out_dir, seed: int | None = None
) -> Path:
    """Per-image, per-model, per-metric score table (CSV) plus JSON metadata."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = manifest.eval_context(seed)

    def eval_image(image_id: str):
        gsm = manifest.load_gsm(image_id)
        fix = manifest.load_fixations(image_id)
        rows = []
        for model_id in manifest.model_ids:
            esm = manifest.load_model_map(model_id, image_id)
            results = evaluate_all(prepare_pair(esm, gsm), fix, ctx)
            for mid in metric_ids:
                res = results[mid]
                rows.append(
                    (
                        image_id,
                        model_id,
                        mid.value,
                        "" if res.score is None else _fmt(res.score),
                        res.error or "",
                    )
                )
        return rows

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        per_image = list(pool.map(eval_image, manifest.image_ids))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["image_id", "model_id", "metric", "score", "error"])
    for rows in per_image:
        for row in sorted(rows):
            writer.writerow(row)
    scores_path = out / "scores.csv"
    atomic_write_text(scores_path, buf.getvalue())
    atomic_write_text(
        out / "scores.json",
        json.dumps(
            {
                "seed": ctx.rng_seed,
                "metrics": [m.value for m in metric_ids],
                "images": manifest.image_ids,
                "models": manifest.model_ids,
                "emd_grid_res": ctx.emd_grid_res,
                "rauc_low_quantile": ctx.rauc_low_quantile,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
    )
    return scores_path


def load_scores(path) -> dict[tuple[str, str, str], float | None]:
    """scores.csv -> {(image, model, metric): score or None}."""
    table: dict[tuple[str, str, str], float | None] = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            key = (row["image_id"], row["model_id"], row["metric"])
            table[key] = float(row["score"]) if row["score"] else None
    return table


def run_compare(
    manifest: Manifest, scores_path, out_dir, checkpoint: str | None = None
) -> Path:
    """Confidence-weighted accuracy per metric (and the learned metric, if given)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = load_scores(scores_path)
    dataset = manifest.judgments()
    total_c = sum(derive_scores(r)[1] for r in dataset.records)

    rows = []
    for mid in MetricId:
        side_scores = {}
        missing = False
        for rec in dataset.records:
            for side, model in (("a", rec.esm_a_id), ("b", rec.esm_b_id)):
                val = table.get((rec.image_id, model, mid.value))
                if val is None:
                    missing = True
                side_scores[(rec.question_id, side)] = val
        if missing:
            rows.append((mid.value, "", _fmt(total_c), str(len(dataset)), "missing scores"))
            continue
        try:
            p = metric_accuracy(mid, side_scores, dataset)
            rows.append((mid.value, _fmt(p), _fmt(total_c), str(len(dataset)), ""))
        except (MissingScores, ZeroTotalConfidence) as e:
            rows.append((mid.value, "", _fmt(total_c), str(len(dataset)), str(e)))

    if checkpoint:
        net = cpj.load_checkpoint(checkpoint)
        all_maps = _manifest_maps(manifest)
        try:
            p = cpj.pairwise_accuracy(net, dataset, all_maps)
            rows.append(("CPJ", _fmt(p), _fmt(total_c), str(len(dataset)), ""))
        except (MissingScores, ZeroTotalConfidence) as e:
            rows.append(("CPJ", "", _fmt(total_c), str(len(dataset)), str(e)))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric", "accuracy", "sum_confidence", "records", "error"])
    writer.writerows(rows)
    path = out / "accuracy.csv"
    atomic_write_text(path, buf.getvalue())
    return path


def _manifest_maps(manifest: Manifest) -> dict[tuple[str, str], np.ndarray]:
    """(map_id, image_id) resolver over every map the manifest references."""
    out: dict[tuple[str, str], np.ndarray] = {}
    for model in manifest.model_ids:
        for img in manifest.image_ids:
            out[(model, img)] = manifest.load_model_map(model, img)
    return out


def run_rank(manifest: Manifest, scores_path, out_dir) -> Path:
    """Model ranking per metric with discordance against the human reference."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = load_scores(scores_path)
    dataset = manifest.judgments()
    ladder = [m for m in manifest.model_ids if m not in (GSM_ID, RND_ID)]

    human = human_reference_ranking(
        JudgmentDataset(
            tuple(r for r in dataset.records if r.esm_a_id in ladder and r.esm_b_id in ladder)
        )
    )

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric", "inconsistent_with_human", "rank", "model", "mean_score"])
    for mid in MetricId:
        per_model: dict[str, dict[str, float]] = {}
        for model in ladder:
            scores = {
                img: table.get((img, model, mid.value)) for img in manifest.image_ids
            }
            scores = {k: v for k, v in scores.items() if v is not None}
            if scores:
                per_model[model] = scores
        if len(per_model) != len(ladder):
            continue
        ranking = rank_models(per_model, mid)
        bad = inconsistent_pairs(ranking, human)
        for pos, (model, mean) in enumerate(ranking.entries, start=1):
            writer.writerow([mid.value, bad, pos, model, _fmt(mean)])
    writer.writerow([])
    writer.writerow(["human_reference", "", "", "", ""])
    for pos, (model, wins) in enumerate(human.entries, start=1):
        writer.writerow(["human", "", pos, model, _fmt(wins)])
    path = out / "rankings.csv"
    atomic_write_text(path, buf.getvalue())
    return path


def run_agreement(
    manifest: Manifest, out_dir, mode: str = "auto", n_samples: int = 10_000, seed: int = 0
) -> Path:
    """Inter-subject agreement for every feasible subgroup size."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = manifest.judgments()
    n = len(dataset.subjects)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "alpha", "mode"])
    for t in range(1, n // 2 + 1):
        alpha = inter_subject_agreement(dataset, t, mode=mode, n_samples=n_samples, seed=seed)
        writer.writerow([t, _fmt(alpha), mode])
    path = out / "agreement.csv"
    atomic_write_text(path, buf.getvalue())
    return path


def dataset_triplets(
    manifest: Manifest, dataset: JudgmentDataset
) -> list[cpj.TrainingTriplet]:
    """Judgment records as training triplets; GSM-vs-RND records become anchors."""
    gsms = {img: manifest.load_gsm(img) for img in manifest.image_ids}
    cache: dict[tuple[str, str], np.ndarray] = {}

    def fetch(model: str, img: str) -> np.ndarray:
        if model == GSM_ID:
            return gsms[img]
        key = (model, img)
        if key not in cache:
            cache[key] = manifest.load_model_map(model, img)
        return cache[key]

    triplets = []
    for rec in dataset.records:
        _, _, r = derive_scores(rec)
        anchor = rec.esm_a_id == GSM_ID and rec.esm_b_id == RND_ID
        triplets.append(
            cpj.TrainingTriplet(
                fetch(rec.esm_a_id, rec.image_id),
                fetch(rec.esm_b_id, rec.image_id),
                gsms[rec.image_id],
                r=1.0 if anchor else r,
                is_anchor=anchor,
            )
        )
    return triplets


def run_train(manifest: Manifest, out_dir, config: cpj.CpjConfig) -> Path:
    """Train the learned metric on the manifest's judgments; write ckpt + history."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = manifest.judgments()
    triplets = dataset_triplets(manifest, dataset)
    net = cpj.init_network(config)
    net, history = cpj.train(net, triplets, config)

    ckpt_path = out / "cpj.ckpt"
    tmp = ckpt_path.with_name(ckpt_path.name + ".tmp")
    cpj.save_checkpoint(net, tmp)
    os.replace(tmp, ckpt_path)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iteration", "mean_loss", "learning_rate"])
    for it, mean_loss, lr in history.rows:
        writer.writerow([it, _fmt(mean_loss), _fmt(lr)])
    atomic_write_text(out / "history.csv", buf.getvalue())
    return ckpt_path
