"""salbench command line: synth, eval, compare, rank, agreement, train,
score, gradcheck and serve. Exit codes: 0 ok, 1 operation error, 2 usage or
manifest error."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench, cpj
from .errors import MalformedFile, SalbenchError

USAGE_EXIT = 2
ERROR_EXIT = 1


def _load_config_arg(raw: str | None, seed: int | None, extra: dict | None = None) -> cpj.CpjConfig:
    """CpjConfig from a JSON file/inline string, defaulting to the desk scale.

    Explicit configs still start from the desk baseline unless they set
    "full": true, so partial overrides stay cheap to run.
    """
    fields: dict = {}
    if raw:
        text = raw if raw.lstrip().startswith("{") else Path(raw).read_text()
        fields.update(json.loads(text))
    if extra:
        fields.update(extra)
    if "fc_dims" in fields:
        fields["fc_dims"] = tuple(fields["fc_dims"])
    if seed is not None:
        fields["seed"] = seed
    full = bool(fields.pop("full", False))
    return cpj.CpjConfig(**fields) if full else cpj.desk_config(**fields)


def _add_common(p: argparse.ArgumentParser, out_required: bool = True):
    p.add_argument("--out", required=out_required, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the context seed")


def _json_arg(raw: str | None) -> dict:
    if not raw:
        return {}
    text = raw if raw.lstrip().startswith("{") else Path(raw).read_text()
    obj = json.loads(text)
    if not isinstance(obj, dict):
        raise ValueError("--config must be a JSON object")
    return obj


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="salbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a self-contained synthetic benchmark")
    _add_common(p)
    p.add_argument("--images", type=int, default=16)
    p.add_argument("--width", type=int, default=48)
    p.add_argument("--height", type=int, default=48)
    p.add_argument("--subjects", type=int, default=16)
    p.add_argument("--beta", type=float, default=8.0)
    p.add_argument("--points", type=int, default=40)
    p.add_argument("--gsm-sigma", type=float, default=2.5)
    p.add_argument("--emd-grid", type=int, default=16)
    p.add_argument("--config", default=None, help="JSON overrides for the generator kwargs")

    p = sub.add_parser("eval", help="score every (image, model) cell with the classic metrics")
    p.add_argument("--manifest", required=True)
    _add_common(p)
    p.add_argument("--metrics", default=None, help="comma list, default all ten")
    p.add_argument("--config", default=None, help="JSON overlay on the manifest eval params")

    p = sub.add_parser("compare", help="prediction accuracy of each metric against the judgments")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scores", required=True, help="scores.csv from eval")
    p.add_argument("--checkpoint", default=None, help="optional learned-metric checkpoint")
    _add_common(p)
    p.add_argument("--config", default=None, help="JSON overlay on the manifest eval params")

    p = sub.add_parser("rank", help="model rankings per metric vs the human reference")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scores", required=True)
    _add_common(p)
    p.add_argument("--config", default=None, help="JSON overlay on the manifest eval params")

    p = sub.add_parser("agreement", help="inter-subject agreement for t = 1..subjects/2")
    p.add_argument("--manifest", required=True)
    _add_common(p)
    p.add_argument("--mode", choices=["auto", "exact", "sampled"], default="auto")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--config", default=None, help='JSON, e.g. {"mode": "exact", "samples": 5000}')

    p = sub.add_parser("train", help="train the learned metric on a benchmark's judgments")
    p.add_argument("--manifest", required=True)
    _add_common(p)
    p.add_argument("--config", default=None, help="CpjConfig JSON (file or inline)")
    p.add_argument("--iterations", type=int, default=None)

    p = sub.add_parser("score", help="score one (ESM, GSM) pair with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--esm", required=True)
    p.add_argument("--gsm", required=True)
    _add_common(p, out_required=False)
    p.add_argument("--config", default=None, help="accepted for symmetry; the checkpoint wins")

    p = sub.add_parser("gradcheck", help="finite-difference check of the exact gradients")
    _add_common(p, out_required=False)
    p.add_argument("--config", default=None)
    p.add_argument("--probes", type=int, default=96)

    p = sub.add_parser("serve", help="run the subjective-test annotation service")
    p.add_argument("--manifest", required=True)
    p.add_argument("--log", required=True, help="append-only answer log (JSON lines)")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--seed", type=int, default=0)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except MalformedFile as e:
        print(f"salbench: manifest/file error: {e}", file=sys.stderr)
        return USAGE_EXIT
    except SalbenchError as e:
        print(f"salbench: {e}", file=sys.stderr)
        return ERROR_EXIT
    except (OSError, ValueError, json.JSONDecodeError) as e:
        print(f"salbench: {e}", file=sys.stderr)
        return ERROR_EXIT


def _dispatch(args) -> int:
    if args.command == "synth":
        kwargs = dict(
            seed=args.seed or 0,
            n_images=args.images,
            width=args.width,
            height=args.height,
            n_subjects=args.subjects,
            beta=args.beta,
            n_points=args.points,
            gsm_sigma=args.gsm_sigma,
            emd_grid_res=args.emd_grid,
        )
        kwargs.update(_json_arg(args.config))
        manifest = bench.generate_benchmark(args.out, **kwargs)
        print(manifest)
        return 0

    if args.command == "eval":
        manifest = _manifest_with_overlay(args)
        path = bench.run_eval(manifest, bench.parse_metric_list(args.metrics), args.out, args.seed)
        print(path)
        return 0

    if args.command == "compare":
        manifest = _manifest_with_overlay(args)
        path = bench.run_compare(manifest, args.scores, args.out, args.checkpoint)
        print(path)
        return 0

    if args.command == "rank":
        manifest = _manifest_with_overlay(args)
        path = bench.run_rank(manifest, args.scores, args.out)
        print(path)
        return 0

    if args.command == "agreement":
        manifest = bench.load_manifest(args.manifest)
        cfg = _json_arg(args.config)
        path = bench.run_agreement(
            manifest,
            args.out,
            mode=cfg.get("mode", args.mode),
            n_samples=int(cfg.get("samples", args.samples)),
            seed=args.seed or 0,
        )
        print(path)
        return 0

    if args.command == "train":
        manifest = bench.load_manifest(args.manifest)
        extra = {} if args.iterations is None else {"max_iterations": args.iterations}
        config = _load_config_arg(args.config, args.seed, extra)
        path = bench.run_train(manifest, args.out, config)
        print(path)
        return 0

    if args.command == "score":
        from .maps import load_map

        net = cpj.load_checkpoint(args.checkpoint)
        value = cpj.score(net, load_map(args.esm), load_map(args.gsm))
        print(bench._fmt(value))
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            bench.atomic_write_text(out / "score.json", json.dumps({"score": value}) + "\n")
        return 0

    if args.command == "gradcheck":
        return _gradcheck(args)

    if args.command == "serve":
        from .service import run_server

        run_server(args.manifest, args.log, args.port, args.seed)
        return 0

    raise AssertionError(f"unhandled command {args.command}")


def _manifest_with_overlay(args):
    manifest = bench.load_manifest(args.manifest)
    manifest.eval_params.update(_json_arg(getattr(args, "config", None)))
    return manifest


def _gradcheck(args) -> int:
    import numpy as np

    from .synth import DegradationKind, DegradationSpec, degrade, fixations_to_gsm, gen_fixations, random_map

    config = _load_config_arg(
        args.config,
        args.seed,
        {"input_res": 32, "width_multiplier": 1 / 16, "fc_dims": (16, 16, 1)} if not args.config else None,
    )
    seed = args.seed or 0
    net = cpj.init_network(config, dtype=np.float64)
    fix = gen_fixations(seed + 1, 30, 48, 48, 9.0)
    g = fixations_to_gsm(fix, 2.5, 48, 48)
    batch = [
        cpj.TrainingTriplet(
            degrade(g, DegradationSpec(DegradationKind.BLUR, 0.3, seed)),
            degrade(g, DegradationSpec(DegradationKind.NOISE, 0.7, seed)),
            g,
            r=0.5,
        ),
        cpj.TrainingTriplet(g, random_map(seed + 2, 48, 48), g, r=1.0, is_anchor=True),
    ]
    max_rel, checked, skipped = cpj.gradient_check(net, batch, n_probes=args.probes, seed=seed)
    print(f"max_rel_error={max_rel:.3e} checked={checked} skipped_kinks={skipped}")
    ok = max_rel < 1e-4 and checked > 0
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        bench.atomic_write_text(
            out / "gradcheck.json",
            json.dumps(
                {"max_rel_error": max_rel, "checked": checked, "skipped": skipped, "pass": ok}
            )
            + "\n",
        )
    return 0 if ok else ERROR_EXIT


if __name__ == "__main__":
    sys.exit(main())
