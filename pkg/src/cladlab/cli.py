"""Command-line entry point tying generation, training, evaluation,
ablations, and saliency into reproducible runs.

All configuration comes from JSON files plus ``--set key=value`` overrides;
the resolved config and its fingerprint are echoed next to every output so
any artifact is traceable to its run.  Exit codes: 0 success, 1 validation
or usage error, 2 numeric fault.  ``CLAD_THREADS`` caps sweep parallelism.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import config as cfg
from . import evalkit, storage, synthgen
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import CladError, ConfigurationError, NumericFault
from .trainer import train
from .types import VariantKind

_SPLIT_DIRS = {
    VariantKind.ORIGINAL: "original",
    VariantKind.ONLY_FG: "only_fg",
    VariantKind.ONLY_BGT: "only_bgt",
    VariantKind.MIXED_SAME: "mixed_same",
    VariantKind.MIXED_RAND: "mixed_rand",
}


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _dataset_root(data: Path, split: str, kind: VariantKind) -> Path:
    # accept either a benchmark root (gen output) or a single dataset dir
    if (data / "manifest.json").is_file():
        return data
    return data / split / _SPLIT_DIRS[kind]


def _write_resolved(directory: Path, name: str, resolved: dict, fingerprint: str) -> None:
    payload = dict(resolved)
    payload["config_fingerprint"] = fingerprint
    (directory / name).write_text(
        json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8"
    )


def _cmd_gen(args) -> int:
    resolved = cfg.load_config(args.spec, cfg.SPEC_DEFAULTS, args.set or [])
    fingerprint = cfg.config_fingerprint(resolved)
    spec = cfg.dataset_spec_from_dict(resolved)
    benchmark = synthgen.generate_benchmark(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for split, variants in benchmark.items():
        for kind, vset in variants.items():
            storage.write_dataset(vset, out / split / _SPLIT_DIRS[kind], fingerprint)
    _write_resolved(out, "spec.resolved.json", resolved, fingerprint)
    print(f"gen: wrote {sum(len(v) for v in benchmark.values())} variant sets to {out}")
    return 0


def _load_eval_sets(data: Path) -> dict[VariantKind, storage.VariantSet]:
    return {
        kind: storage.read_dataset(_dataset_root(data, "test", kind))
        for kind in _SPLIT_DIRS
    }


def _cmd_train(args) -> int:
    resolved = cfg.load_config(args.config, cfg.RUN_DEFAULTS, args.set or [])
    fingerprint = cfg.config_fingerprint(resolved)
    run_config = cfg.run_config_from_dict(resolved)
    train_set = storage.read_dataset(_dataset_root(Path(args.data), "train", VariantKind.ORIGINAL))
    encoder, log = train(run_config, train_set)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, encoder)
    _write_resolved(out.parent, out.name + ".config.json", resolved, fingerprint)
    if args.log:
        Path(args.log).parent.mkdir(parents=True, exist_ok=True)
        log.write_csv(args.log, fingerprint)
    print(
        f"train: {run_config.loss.variant.value} for {run_config.epochs} epochs, "
        f"final class loss {log.epochs[-1].mean_class_loss:.4f}, wrote {out}"
    )
    return 0


def _train_fingerprint(model_path: Path) -> str:
    sidecar = model_path.parent / (model_path.name + ".config.json")
    if sidecar.is_file():
        try:
            return json.loads(sidecar.read_text(encoding="utf-8")).get(
                "config_fingerprint", "unknown"
            )
        except json.JSONDecodeError:
            return "unknown"
    return "unknown"


def _cmd_eval(args) -> int:
    encoder = load_checkpoint(args.model)
    eval_sets = _load_eval_sets(Path(args.data))
    fingerprint = _train_fingerprint(Path(args.model))
    report = evalkit.evaluate_model(encoder, eval_sets, config_fingerprint=fingerprint)
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(
            json.dumps(report.to_dict(), indent=1, sort_keys=True), encoding="utf-8"
        )
    if args.csv:
        Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
        evalkit.write_report_csv(args.csv, [report])
    gap = report.bg_gap * 100.0
    print(
        f"eval: original {report.accuracies['Original']:.3f}, "
        f"mixed-rand {report.accuracies['MixedRand']:.3f}, bg-gap {gap:.1f} points"
    )
    return 0


def _parse_values(axis: str, raw: str) -> list:
    parts = [p for p in raw.split(",") if p != ""]
    if not parts:
        raise ConfigurationError("--values must list at least one value")
    if axis == "lambda":
        return [float(p) for p in parts]
    if axis == "queue_size":
        return [int(p) for p in parts]
    return parts


def _cmd_ablate(args) -> int:
    resolved = cfg.load_config(args.config, cfg.RUN_DEFAULTS, args.set or [])
    fingerprint = cfg.config_fingerprint(resolved)
    base_config = cfg.run_config_from_dict(resolved)
    data = Path(args.data)
    train_set = storage.read_dataset(_dataset_root(data, "train", VariantKind.ORIGINAL))
    eval_sets = _load_eval_sets(data)
    values = _parse_values(args.axis, args.values)
    seeds = list(range(args.seeds))
    rows = evalkit.ablation_sweep(
        base_config,
        args.axis,
        values,
        seeds,
        train_set,
        eval_sets,
        max_workers=evalkit.thread_cap(1),
    )
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    evalkit.write_sweep_csv(args.out, rows, fingerprint)
    print(f"ablate: {len(rows)} rows ({args.axis}) -> {args.out}")
    return 0


def _cmd_saliency(args) -> int:
    encoder = load_checkpoint(args.model)
    data_root = _dataset_root(Path(args.data), "test", VariantKind.ORIGINAL)
    vset = storage.read_dataset(data_root)
    by_id = vset.by_id()
    ids = [int(p) for p in args.ids.split(",") if p != ""]
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise ConfigurationError(f"ids not in dataset: {missing}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fingerprint = _train_fingerprint(Path(args.model))
    grad_fn = evalkit.encoder_grad_fn(encoder)
    index = {"config_fingerprint": fingerprint, "sigma": args.sigma,
             "n_samples": args.n_samples, "records": []}
    for sid in ids:
        sample = by_id[sid]
        saliency = evalkit.smoothgrad(
            grad_fn,
            sample.image,
            sample.fg_label,
            n_samples=args.n_samples,
            sigma=args.sigma,
            rng=args.seed,
        )
        input_name = f"id_{sid:06d}_input.png"
        map_name = f"id_{sid:06d}_saliency.png"
        Image.fromarray(np.round(sample.image * 255.0).astype(np.uint8), "RGB").save(
            out / input_name
        )
        Image.fromarray(np.round(saliency * 255.0).astype(np.uint8), "L").save(out / map_name)
        index["records"].append(
            {"id": sid, "target_class": sample.fg_label, "input": input_name, "saliency": map_name}
        )
    (out / "index.json").write_text(
        json.dumps(index, indent=1, sort_keys=True), encoding="utf-8"
    )
    print(f"saliency: wrote {len(ids)} map(s) to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="clad", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate the synthetic benchmark (all variants)")
    p.add_argument("--spec", help="dataset spec JSON (defaults used when omitted)")
    p.add_argument("--out", required=True, help="output benchmark directory")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train", help="train a model on a generated benchmark")
    p.add_argument("--config", help="run config JSON (defaults used when omitted)")
    p.add_argument("--data", required=True, help="benchmark directory from gen")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--log", help="per-epoch CSV log path")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test variants")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", help="JSON report path")
    p.add_argument("--csv", help="CSV report path")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="sweep one axis over values x seeds")
    p.add_argument("--config", help="base run config JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--axis", required=True, choices=list(evalkit.SWEEP_AXES))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--seeds", type=int, default=3, help="number of master seeds (0..n-1)")
    p.add_argument("--out", required=True, help="sweep CSV path")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("saliency", help="write SmoothGrad maps for chosen test ids")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--ids", required=True, help="comma-separated sample ids")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-samples", type=int, default=25)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_saliency)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except NumericFault as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return 2
    except CladError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
