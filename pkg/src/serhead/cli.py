"""Command-line entry point: gen-data, train, eval, fuse, gradcheck.

Every command is driven by one JSON config file (see ``serhead.config``)
plus dotted ``--set section.key=value`` overrides. Exit codes: 0 success,
1 runtime failure, 2 config validation failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import fusion as fusion_mod
from . import plots
from .autodiff import Tensor
from .config import RunConfig
from .dataset import NUM_CLASSES, TEXT_DIM, generate_synthetic_dataset, load_manifest, \
    verify_manifest_files
from .errors import ConfigError
from .losses import smooth_labels, weighted_cross_entropy
from .model import HeadModel, table5_architectures
from .train import evaluate, stream_rng, train

GRADCHECK_TOL = 1e-3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="serhead",
                                     description="Speech-emotion head: data, training, "
                                                 "evaluation and prediction fusion")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, needs_config in [
        ("gen-data", cmd_gen_data, True),
        ("train", cmd_train, True),
        ("eval", cmd_eval, True),
        ("fuse", cmd_fuse, True),
        ("gradcheck", cmd_gradcheck, False),
    ]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=needs_config,
                       help="JSON config file" + ("" if needs_config else " (optional)"))
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="dotted config override, e.g. train.lr=0.001")
        p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            cfg = RunConfig.load(args.config, args.overrides)
        else:
            cfg = RunConfig.from_overrides(args.overrides)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        return args.func(cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - single diagnostic line, nonzero exit
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


def _out_dir(cfg: RunConfig) -> Path:
    out = cfg.path("out_dir")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_data(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    manifest = generate_synthetic_dataset(cfg.synthetic_spec(), out)
    hist = manifest.class_histogram()
    if not args.no_figures:
        plots.save_label_distribution(hist, out / "label_distribution.png")
    print(f"wrote {len(manifest)} utterances to {out} (per-class counts {hist.tolist()})")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    train_manifest = load_manifest(cfg.path("train_manifest"))
    dev_manifest = load_manifest(cfg.path("dev_manifest"))
    num_layers, hidden = verify_manifest_files(train_manifest)
    verify_manifest_files(dev_manifest)

    model = HeadModel(cfg.architecture(), num_layers, hidden, stream_rng(cfg.seed, "init"))
    print(f"training {model.parameter_count()} parameters "
          f"({cfg.architecture().pooling} pooling, {cfg.architecture().conditioning} conditioning)")
    result = train(model, train_manifest, dev_manifest, cfg.train_config())

    with open(out / "train_log.jsonl", "w") as fh:
        for entry in result.log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    model.load_state_arrays(result.best_state)
    model.save(out / "checkpoint")
    if not args.no_figures and result.log:
        plots.save_training_curves(result.log, out / "training_curves.png")

    if result.diverged:
        print("error: training diverged (non-finite loss); "
              f"kept best checkpoint from epoch {result.best_epoch}", file=sys.stderr)
        return 1
    print(f"best dev F1-macro {result.best_dev_f1:.4f} at epoch {result.best_epoch}; "
          f"checkpoint in {out / 'checkpoint'}")
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    model = HeadModel.load(cfg.path("checkpoint"))
    manifest = load_manifest(cfg.path("eval_manifest"))
    verify_manifest_files(manifest)
    probs, metrics, ids = evaluate(model, manifest)
    labels = [r.label_id for r in manifest.records]

    fusion_mod.write_predictions_csv(out / "predictions.csv", ids, labels, probs)
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True))
    if not args.no_figures:
        plots.save_f1_bars(metrics["f1_per_class"], metrics["f1_macro"],
                           out / "f1_per_class.png")
    print(f"evaluated {len(ids)} utterances: F1-macro {metrics['f1_macro']:.4f}")
    return 0


def cmd_fuse(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    preds = fusion_mod.load_prediction_set([str(p) for p in cfg.prediction_paths()])
    fus = cfg.raw["fusion"]
    weights, report = fusion_mod.fit_fusion_weights(
        preds, mode=fus["constraint_mode"], rho_beg=fus["rho_beg"],
        rho_end=fus["rho_end"], max_evals=fus["max_evals"])

    fused = fusion_mod.fuse_predict_all(preds, weights)
    fusion_mod.write_fused_csv(out / "fused.csv", preds.utterance_ids, fused)
    fusion_mod.write_fusion_report(out / "fusion_report.json", report)
    np.save(out / "fusion_weights.npy", weights.w)
    if not args.no_figures:
        plots.save_fusion_comparison(report, out / "fusion_f1.png")
    print(f"fused {preds.n_models} models over {len(preds.labels)} utterances: "
          f"F1-macro {report['f1_macro_before']:.4f} -> {report['f1_macro_after']:.4f}")
    return 0


def gradcheck_loss(model: HeadModel, rng: np.random.Generator):
    """Deterministic full-pipeline loss closure for one architecture."""
    batch = []
    for label in (0, 3, 7):
        feats = rng.standard_normal((model.num_layers, 6, model.hidden))
        gender = int(rng.integers(0, 2))
        text = rng.standard_normal(TEXT_DIM)
        batch.append((feats, gender, text, label))
    weights = np.ones(NUM_CLASSES)
    gamma = model.arch.label_smoothing

    def loss_fn():
        rows = [model.forward(Tensor(f), g, Tensor(t), training=False)
                for f, g, t, _ in batch]
        targets = [smooth_labels(label, NUM_CLASSES, gamma) for _, _, _, label in batch]
        return weighted_cross_entropy(ad.stack_rows(rows), targets, weights)

    return loss_fn


def cmd_gradcheck(cfg: RunConfig, args) -> int:
    num_layers = cfg.raw["data"]["num_layers"]
    hidden = cfg.raw["data"]["hidden"]
    d = 16
    print(f"gradient check at l={num_layers}, h={hidden}, d={d} "
          f"(tolerance {GRADCHECK_TOL:g})")
    worst_overall = 0.0
    failed = []
    for name, arch in table5_architectures(projection_size=d).items():
        model = HeadModel(arch, num_layers, hidden, stream_rng(cfg.seed, "init"))
        loss_fn = gradcheck_loss(model, np.random.default_rng(cfg.seed + 1))
        err = ad.finite_diff_check(loss_fn, list(model.parameters().values()), eps=1e-4)
        status = "PASS" if err < GRADCHECK_TOL else "FAIL"
        if status == "FAIL":
            failed.append(name)
        worst_overall = max(worst_overall, err)
        print(f"  {name:8s} {arch.pooling:9s} {arch.conditioning:12s} "
              f"max rel err {err:.3e}  {status}")
    print(f"worst over all architectures: {worst_overall:.3e}")
    return 0 if not failed else 1


if __name__ == "__main__":
    sys.exit(main())
