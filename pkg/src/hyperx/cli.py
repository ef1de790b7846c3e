"""Command-line entry point.

Subcommands: synth, preprocess, train, eval, gradcheck.  Exit codes:
0 success, 1 usage error, 2 data/format error, 3 check failure.

Every run writes a run.json capturing the fully resolved configuration and
a content hash of the dataset manifest when one is involved.  Config
precedence is defaults < --config file < explicit flags.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import sigproc
from .errors import ConfigError, FormatError, HyperxError, IntegrityError
from .layers import (
    BatchNorm1d,
    Conv1d,
    Dense,
    PHCLayer,
    PHMLayer,
    hamilton_matrices,
)
from .model import H2Model, ModelConfig, VARIANTS, load_checkpoint
from .tensor import (
    Tensor,
    dropout,
    grad_check,
    no_grad,
    relu,
    softmax_cross_entropy,
    tensor_sum,
    _make_output,
)
from .trainer import TrainConfig, evaluate, train

USAGE_ERROR, DATA_ERROR, CHECK_FAILURE = 1, 2, 3
_SCHEMA_VERSION = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(USAGE_ERROR)


def _write_json(path: Path, payload: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"schema_version": _SCHEMA_VERSION, **payload}, indent=1, sort_keys=True))


def _write_run_json(outdir: Path, command: str, resolved: dict, data_path=None, results=None):
    manifest_sha = None
    if data_path is not None:
        manifest = Path(data_path) / "manifest.json"
        if manifest.exists():
            manifest_sha = ds.manifest_hash(data_path)
    _write_json(
        outdir / "run.json",
        {
            "command": command,
            "resolved_config": resolved,
            "dataset": {"path": str(data_path) if data_path else None, "manifest_sha256": manifest_sha},
            "results": results or {},
        },
    )


def _load_config_file(path):
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise FormatError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise FormatError(f"config file {path} is not valid JSON: {e}") from e


def _merged_config(cls, file_section: dict, flag_values: dict):
    cfg = cls()
    known = set(cfg.to_dict())
    unknown = set(file_section) - known
    if unknown:
        raise FormatError(f"unknown {cls.__name__} keys in config file: {sorted(unknown)}")
    merged = {**cfg.to_dict(), **file_section}
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    return cls.from_dict(merged)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        print(f"error: output directory {out} is not empty (use --force)", file=sys.stderr)
        return DATA_ERROR
    spec = ds.SyntheticSpec(
        num_subjects=args.subjects,
        trials_per_subject=args.trials,
        seed=args.seed,
        noise_level=args.noise,
        blink_rate=args.blink_rate,
        pre_trial_ms=args.pre_trial_ms,
    )
    data = ds.generate_synthetic(spec)
    ds.save_dataset(data, out)
    n_classes_a = np.bincount([t.arousal for t in data.trials], minlength=3)
    print(f"wrote {len(data.trials)} trials to {out}")
    print(f"subjects={spec.num_subjects} trials/subject={spec.trials_per_subject} noise={spec.noise_level}")
    print(f"arousal class counts: {n_classes_a.tolist()}")
    _write_run_json(out, "synth", {"synthetic_spec": spec.to_dict()}, data_path=out)
    return 0


# ---------------------------------------------------------------------------
# preprocess
# ---------------------------------------------------------------------------


def _load_segments_any(path, preprocess_cfg=None, workers=None):
    """Accept a raw dataset directory or a preprocessed .npz archive."""
    p = Path(path)
    if p.is_dir():
        raw = ds.load_dataset(p)
        return sigproc.preprocess_dataset(raw, preprocess_cfg, workers=workers), p
    if p.suffix == ".npz":
        segs, _ = ds.load_segments(p)
        return segs, None
    raise FormatError(f"{p} is neither a dataset directory nor a .npz segment archive")


def cmd_preprocess(args) -> int:
    cfg = sigproc.PreprocessConfig.from_dict(_load_config_file(args.config).get("preprocess", {}))
    raw = ds.load_dataset(args.data)
    segs = sigproc.preprocess_dataset(raw, cfg, workers=args.workers)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ds.save_segments(segs, out, meta={"preprocess": cfg.to_dict(), "source": str(args.data)})
    print(f"wrote {len(segs)} segments from {len(raw.trials)} trials to {out}")
    _write_run_json(out.parent, "preprocess", {"preprocess": cfg.to_dict()}, data_path=args.data)
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _train_once(segs, model_cfg: ModelConfig, train_cfg: TrainConfig, outdir: Path):
    train_segs, test_segs = ds.split_segments(
        segs, train_cfg.target, train_cfg.train_frac, train_cfg.split_seed, train_cfg.split_unit
    )
    model = H2Model(model_cfg, seed=train_cfg.seed)
    result = train(model, train_segs, test_segs, train_cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "checkpoint.h2ck").write_bytes(result.best_checkpoint)
    (outdir / "history.csv").write_text(result.history_csv())
    metrics = result.best_metrics.to_dict()
    metrics.update(
        {
            "best_epoch": result.best_epoch,
            "epochs_run": result.epochs_run,
            "aborted": result.aborted,
            "param_count": model.count_parameters(),
            "variant": model_cfg.variant,
            "seed": train_cfg.seed,
            "target": train_cfg.target,
        }
    )
    _write_json(outdir / "metrics.json", metrics)
    return metrics


def cmd_train(args) -> int:
    file_cfg = _load_config_file(args.config)
    model_cfg = _merged_config(
        ModelConfig, file_cfg.get("model", {}), {"variant": args.variant, "dropout_p": args.dropout}
    )
    train_flags = {
        "target": args.target,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "max_lr": args.max_lr,
        "pct_start": args.pct_start,
        "patience": args.patience,
        "train_frac": args.train_frac,
        "split_unit": args.split_unit,
        "split_seed": args.split_seed,
        "track_train_accuracy": True if args.track_train_accuracy else None,
        "augment": False if args.no_augment else None,
    }
    train_cfg = _merged_config(TrainConfig, file_cfg.get("train", {}), train_flags)
    pre_cfg = sigproc.PreprocessConfig.from_dict(file_cfg.get("preprocess", {}))

    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [train_cfg.seed]
    variants = list(VARIANTS) if args.sweep_variants else [model_cfg.variant]

    segs, raw_path = _load_segments_any(args.data, pre_cfg, args.workers)
    outdir = Path(args.out)
    rows = []
    for variant in variants:
        per_seed = []
        for seed in seeds:
            mc = replace(model_cfg, variant=variant)
            tc = replace(train_cfg, seed=seed)
            subdir = outdir if len(variants) == 1 and len(seeds) == 1 else outdir / f"variant_{variant}_seed_{seed}"
            metrics = _train_once(segs, mc, tc, subdir)
            per_seed.append(metrics)
            print(
                f"[{variant} seed={seed}] params={metrics['param_count']['total']} "
                f"macro_f1={metrics['macro_f1']:.4f} acc={metrics['accuracy_percent']:.2f}%"
            )
        f1s = np.array([m["macro_f1"] for m in per_seed])
        accs = np.array([m["accuracy_percent"] for m in per_seed])
        rows.append(
            {
                "variant": variant,
                "params": per_seed[0]["param_count"]["total"],
                "macro_f1_mean": float(f1s.mean()),
                "macro_f1_std": float(f1s.std()),
                "accuracy_mean": float(accs.mean()),
                "accuracy_std": float(accs.std()),
                "seeds": seeds,
            }
        )
    if len(seeds) > 1 or len(variants) > 1:
        print(f"{'variant':<8} {'params':>10} {'F1 (mean±std)':>18} {'acc% (mean±std)':>18}")
        for r in rows:
            print(
                f"{r['variant']:<8} {r['params']:>10} "
                f"{r['macro_f1_mean']:.4f} ± {r['macro_f1_std']:.4f} "
                f"{r['accuracy_mean']:6.2f} ± {r['accuracy_std']:.2f}"
            )
    summary = {"rows": rows, "target": train_cfg.target}
    _write_json(outdir / "summary.json", summary)
    _write_run_json(
        outdir,
        "train",
        {"model": model_cfg.to_dict(), "train": train_cfg.to_dict(), "preprocess": pre_cfg.to_dict(),
         "variants": variants, "seeds": seeds},
        data_path=raw_path,
        results=summary,
    )
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def cmd_eval(args) -> int:
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.exists():
        print(f"error: checkpoint {ckpt_path} does not exist", file=sys.stderr)
        return DATA_ERROR
    model, extra = load_checkpoint(ckpt_path)
    saved_train = extra.get("train_config", {})
    train_cfg = TrainConfig.from_dict({**TrainConfig().to_dict(), **saved_train})
    if args.target:
        train_cfg = replace(train_cfg, target=args.target)

    pre_cfg = sigproc.PreprocessConfig.from_dict(_load_config_file(args.config).get("preprocess", {}))
    segs, raw_path = _load_segments_any(args.data, pre_cfg, args.workers)
    _, test_segs = ds.split_segments(
        segs, train_cfg.target, train_cfg.train_frac, train_cfg.split_seed, train_cfg.split_unit
    )
    report = evaluate(model, test_segs, train_cfg.target)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_json(outdir / "metrics.json", {**report.to_dict(), "target": train_cfg.target})
    with (outdir / "confusion.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred", 0, 1, 2])
        for i, row in enumerate(report.confusion):
            writer.writerow([i, *row])
    print(f"n={report.n} accuracy={report.accuracy_percent:.2f}% macro_f1={report.macro_f1:.4f}")

    if args.emit_embeddings:
        emb_path = outdir / "embeddings.csv"
        labels = test_segs.labels(train_cfg.target)
        with emb_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            width = model.cfg.fusion_input_width()
            writer.writerow([f"emb_{i}" for i in range(width)] + ["label"])
            with no_grad():
                for start in range(0, len(test_segs), 256):
                    idx = slice(start, start + 256)
                    emb = model.embed(
                        test_segs.eeg[idx], test_segs.ecg[idx], test_segs.gsr[idx], test_segs.eye[idx]
                    ).data
                    for row, lab in zip(emb, labels[idx]):
                        writer.writerow([repr(v) for v in row] + [int(lab)])
        print(f"wrote embeddings to {emb_path}")
    _write_run_json(outdir, "eval", {"train": train_cfg.to_dict()}, data_path=raw_path,
                    results={"macro_f1": report.macro_f1, "accuracy": report.accuracy})
    return 0


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------


def _broken_relu(x: Tensor) -> Tensor:
    """relu with a deliberately wrong backward rule (harness self-test)."""
    mask = x.data > 0
    return _make_output(x.data * mask, [(x, lambda g: g * mask * 1.01)])


def _quaternion_oracle_check(n_pairs: int = 200, tol: float = 1e-12) -> tuple[str, bool, float]:
    """phm_forward with Hamilton-frozen A against direct quaternion products."""
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(n_pairs):
        q = rng.standard_normal(4)
        p = rng.standard_normal(4)
        layer = PHMLayer(4, 4, 4, rng, bias=False, algebra=hamilton_matrices(4))
        layer.weight.f.data = q.reshape(4, 1, 1)
        out = layer.forward(Tensor(p.reshape(1, 4))).data[0]
        a, b, c, d = q
        w, x, y, z = p
        oracle = np.array(
            [
                a * w - b * x - c * y - d * z,
                a * x + b * w + c * z - d * y,
                a * y - b * z + c * w + d * x,
                a * z + b * y - c * x + d * w,
            ]
        )
        worst = max(worst, float(np.abs(out - oracle).max()))
    return "phm n=4 hamilton vs quaternion oracle", worst < tol, worst


def _gradcheck_battery(args):
    rng = np.random.default_rng(5)
    tol = args.tol
    relu_op = _broken_relu if args.break_backward else relu
    checks = []

    def layer_check(name, layer, x_shape):
        x = Tensor(rng.standard_normal(x_shape), requires_grad=True)

        def f(_t):
            return tensor_sum(relu_op(layer(x)))

        targets = [("x", x)] + [(pn, p) for pn, p in layer.params()]
        for pn, p in targets:
            checks.append((f"{name}.{pn}", grad_check(f, p if pn != "x" else x, tol=tol, max_probes=args.probes)))

    wanted = args.layer
    if wanted in (None, "dense"):
        layer_check("dense", Dense(9, 7, rng), (4, 9))
    if wanted in (None, "conv"):
        layer_check("conv", Conv1d(3, 5, 3, rng, stride=2, padding=1), (2, 3, 12))
    if wanted in (None, "phm"):
        for n in ([args.n] if args.n else [2, 3, 4, 10]):
            layer_check(f"phm n={n}", PHMLayer(4 * n, 2 * n, n, rng), (3, 4 * n))
    if wanted in (None, "phc"):
        for n in ([args.n] if args.n else [2, 4]):
            layer_check(f"phc n={n}", PHCLayer(n, 2 * n, n, 3, rng, stride=1, padding=1), (2, n, 10))
    if wanted in (None, "bn"):
        bn = BatchNorm1d(5)
        x3 = Tensor(rng.standard_normal((4, 5, 6)), requires_grad=True)
        f3 = lambda t: tensor_sum(relu_op(bn(x3, True)))
        for pn, p in [("x", x3)] + bn.params():
            checks.append((f"bn3d.{pn}", grad_check(f3, p if pn != "x" else x3, tol=tol, max_probes=args.probes)))
    if wanted in (None, "dropout"):
        xd = Tensor(rng.standard_normal((6, 8)), requires_grad=True)

        def fd(t):
            return tensor_sum(dropout(t, 0.5, True, np.random.default_rng(123)))

        checks.append(("dropout", grad_check(fd, xd, tol=tol, max_probes=args.probes)))
    if wanted in (None, "loss"):
        xl = Tensor(rng.standard_normal((5, 3)), requires_grad=True)
        labels = rng.integers(0, 3, 5)
        checks.append(("softmax_ce", grad_check(lambda t: softmax_cross_entropy(t, labels), xl, tol=tol)))
    if wanted in (None, "full"):
        model = H2Model(ModelConfig(), seed=3)
        B = 2
        # dedicated stream: central differences are only meaningful where no
        # relu kink sits inside the probe interval, so the evaluation point
        # must stay fixed regardless of which layer checks ran before
        batch_rng = np.random.default_rng(501)
        batch = dict(
            eeg=batch_rng.standard_normal((B, 10, 1280)),
            ecg=batch_rng.standard_normal((B, 3, 1280)),
            gsr=batch_rng.standard_normal((B, 1, 1280)),
            eye=batch_rng.standard_normal((B, 4, 600)),
        )
        labels = batch_rng.integers(0, 3, B)

        def f_full(_t):
            logits = model.forward(**batch, train=True, rng=np.random.default_rng(77))
            return softmax_cross_entropy(logits, labels)

        named = dict(model.named_parameters())
        full_targets = [
            "eeg.conv1.A", "eeg.conv1.F", "ecg.conv2.F", "eye.bn1.gamma",
            "gsr.fc.F", "fusion.phm1.A", "fusion.phm1.F", "fusion.head.W", "fusion.head.b",
        ]
        for name in full_targets:
            checks.append(
                (f"full.{name}", grad_check(f_full, named[name], tol=args.full_tol, max_probes=args.full_probes))
            )
    return checks


def cmd_gradcheck(args) -> int:
    checks = _gradcheck_battery(args)
    if args.hamilton or args.layer == "phm" and args.n == 4:
        name, ok, worst = _quaternion_oracle_check()
        print(f"{'PASS' if ok else 'FAIL'} {name}: max_abs_err={worst:.3e}")
    else:
        ok = True
    failures = 0
    for name, report in checks:
        print(f"{'PASS' if report.passed else 'FAIL'} {name}: {report}")
        failures += 0 if report.passed else 1
    if not ok:
        failures += 1
    print(f"{len(checks) - failures}/{len(checks)} gradient checks passed")
    return 0 if failures == 0 else CHECK_FAILURE


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="hyperx", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic raw dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--subjects", type=int, default=27)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--blink-rate", type=float, default=1.0)
    p.add_argument("--pre-trial-ms", type=int, default=1000)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="preprocess a raw dataset into segments")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train the classifier")
    p.add_argument("--data", required=True, help="raw dataset directory or preprocessed .npz")
    p.add_argument("--out", required=True)
    p.add_argument("--target", choices=["arousal", "valence"])
    p.add_argument("--variant", choices=list(VARIANTS))
    p.add_argument("--sweep-variants", action="store_true")
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-lr", type=float)
    p.add_argument("--pct-start", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--train-frac", type=float)
    p.add_argument("--split-unit", choices=["segment", "trial"])
    p.add_argument("--split-seed", type=int)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--track-train-accuracy", action="store_true")
    p.add_argument("--config", help="JSON file with model/train/preprocess sections")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target", choices=["arousal", "valence"])
    p.add_argument("--emit-embeddings", action="store_true")
    p.add_argument("--config")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="compare tape gradients against finite differences")
    p.add_argument("--layer", choices=["dense", "conv", "phm", "phc", "bn", "dropout", "loss", "full"])
    p.add_argument("--n", type=int)
    p.add_argument("--hamilton", action="store_true")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--full-tol", type=float, default=1e-4)
    p.add_argument("--probes", type=int, default=24)
    p.add_argument("--full-probes", type=int, default=6)
    p.add_argument("--break-backward", action="store_true")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, IntegrityError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return DATA_ERROR
    except (ConfigError, HyperxError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
