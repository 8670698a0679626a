"""Command-line entry point: synthesize cohorts, train and evaluate models,
run the benchmark matrix, verify gradients, and export plot data.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
failure.  Every training/evaluation command writes a flat key=value manifest
(config echo, seed, input hash, metrics) from which the run can be replayed.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, gradcheck, synth
from .data import (
    DEFAULT_HORIZONS,
    DEFAULT_LABEL_FRACTION,
    DEFAULT_LABEL_WINDOW,
    DEFAULT_MIN_HISTORY,
    DataError,
    label_days,
    make_windows,
    parse_csv,
    split_chronological,
    write_csv,
    zscore_normalize,
)
from .model import ModelConfig, SeizureFormer, model_from_checkpoint, save_checkpoint
from .train import TrainConfig, evaluate, train_loop, write_manifest

ABLATIONS = {
    "cnn": {"use_cnn_embed": False},
    "cvt": {"use_cvt": False},
    "se": {"use_se": False},
    "all": {"use_cnn_embed": False, "use_cvt": False, "use_se": False},
}

BENCHMARK_MODELS = (
    "seizureformer",
    "seizureformer-no-cnn",
    "seizureformer-no-se",
    "seizureformer-no-cvt",
    "seizureformer-no-all",
    "logistic",
    "poisson",
    "dlinear",
)


@dataclass
class RunConfig:
    """Model, training, and pipeline settings merged into one flat key space."""

    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    label_window: int = DEFAULT_LABEL_WINDOW
    label_fraction: float = DEFAULT_LABEL_FRACTION
    min_history: int = DEFAULT_MIN_HISTORY
    horizons: tuple[int, ...] = DEFAULT_HORIZONS

    def flat(self) -> dict[str, object]:
        out: dict[str, object] = {}
        for f in dataclasses.fields(ModelConfig):
            out[f.name] = getattr(self.model, f.name)
        for f in dataclasses.fields(TrainConfig):
            out[f.name] = getattr(self.train, f.name)
        out["label_window"] = self.label_window
        out["label_fraction"] = self.label_fraction
        out["min_history"] = self.min_history
        out["horizons"] = self.horizons
        return out


_TUPLE_KEYS = {"kernel_sizes", "cvt_kernel", "horizons"}


def _parse_value(key: str, kind: str, raw: str):
    raw = raw.strip()
    if key in _TUPLE_KEYS:
        return tuple(int(v) for v in raw.split(",") if v.strip())
    if "bool" in kind:
        if raw not in ("true", "false"):
            raise ValueError(f"{key} expects true/false, got {raw!r}")
        return raw == "true"
    if "float" in kind:
        return float(raw)
    if "str" in kind:
        return raw
    return int(raw)


def _key_kinds() -> dict[str, tuple[str, str]]:
    """key -> (section, annotation string)."""
    kinds = {}
    for f in dataclasses.fields(ModelConfig):
        kinds[f.name] = ("model", f.type)
    for f in dataclasses.fields(TrainConfig):
        kinds[f.name] = ("train", f.type)
    kinds["label_window"] = ("pipeline", "int")
    kinds["label_fraction"] = ("pipeline", "float")
    kinds["min_history"] = ("pipeline", "int")
    kinds["horizons"] = ("pipeline", "tuple")
    return kinds


def load_run_config(path: str | None = None, overrides: list[str] | None = None) -> RunConfig:
    """Defaults, then key=value lines from ``path``, then --set overrides.

    Unknown keys are rejected; '#' starts a comment.
    """
    kinds = _key_kinds()
    pairs: list[tuple[str, str]] = []
    if path:
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, raw = stripped.partition("=")
            pairs.append((key.strip(), raw))
    for item in overrides or []:
        if "=" not in item:
            raise ValueError(f"override {item!r} must look like key=value")
        key, _, raw = item.partition("=")
        pairs.append((key.strip(), raw))

    cfg = RunConfig()
    for key, raw in pairs:
        if key not in kinds:
            raise ValueError(f"unknown config key {key!r}")
        section, kind = kinds[key]
        value = _parse_value(key, kind, raw)
        if section == "model":
            setattr(cfg.model, key, value)
        elif section == "train":
            setattr(cfg.train, key, value)
        else:
            setattr(cfg, key, value)
    if cfg.model.se_reduction is None:
        cfg.model.se_reduction = max(2, cfg.model.channels)
    cfg.model.validate()
    cfg.train.validate()
    return cfg


def _sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _build_samples(data_path: str, run_cfg: RunConfig, horizon: int):
    series, _report = parse_csv(data_path)
    normalized = zscore_normalize(series)
    labels = label_days(series, run_cfg.label_window, run_cfg.label_fraction, run_cfg.min_history)
    return make_windows(normalized, labels, run_cfg.model.lookback, horizon)


def _config_manifest(run_cfg: RunConfig) -> dict[str, object]:
    return {f"config.{key}": value for key, value in run_cfg.flat().items()}


# -- commands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = synth.SynthConfig(seed=args.seed, days=args.days)
    cfg.validate()
    series = synth.generate_patient(cfg)
    write_csv(series, args.out)
    labels = label_days(series)
    labeled = labels.labels != -1
    positives = int((labels.labels == 1).sum())
    share = positives / max(int(labeled.sum()), 1)
    print(f"wrote {len(series)} days to {args.out}")
    print(f"high-risk prevalence under default labeling: {positives}/{int(labeled.sum())} ({share:.3f})")
    return 0


def cmd_train(args) -> int:
    run_cfg = load_run_config(args.config, args.set)
    if args.ablate:
        for key, value in ABLATIONS[args.ablate].items():
            setattr(run_cfg.model, key, value)
    if args.horizon not in run_cfg.horizons:
        raise ValueError(f"horizon {args.horizon} not in configured horizons {run_cfg.horizons}")

    samples = _build_samples(args.data, run_cfg, args.horizon)
    train_s, val_s, test_s = split_chronological(samples)
    model = SeizureFormer(run_cfg.model, np.random.default_rng(run_cfg.train.seed))
    _, history = train_loop(model, train_s, val_s, run_cfg.train)
    test_report = evaluate(model, test_s)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "checkpoint.txt", run_cfg.model, model.params)
    history_lines = ["epoch,train_loss,val_roc_auc"]
    for i, (loss, auc) in enumerate(zip(history.train_loss, history.val_roc_auc)):
        history_lines.append(f"{i},{loss!r},{auc!r}")
    (out_dir / "history.csv").write_text("\n".join(history_lines) + "\n", encoding="utf-8")

    manifest = _config_manifest(run_cfg)
    manifest.update(
        {
            "command": "train",
            "variant": run_cfg.model.variant,
            "horizon": args.horizon,
            "data_sha256": _sha256(args.data),
            "split.train": len(train_s),
            "split.val": len(val_s),
            "split.test": len(test_s),
            "train.pos_weight": history.pos_weight,
            "train.best_epoch": history.best_epoch,
            "train.stop_reason": history.stop_reason,
            "train.val_best_roc_auc": history.val_roc_auc[history.best_epoch],
            "metrics.test_roc_auc": test_report.roc_auc,
            "metrics.test_pr_auc": test_report.pr_auc,
        }
    )
    write_manifest(out_dir / "manifest.txt", manifest)
    print(f"variant: {run_cfg.model.variant}")
    print(f"best val ROC AUC {history.val_roc_auc[history.best_epoch]:.4f} at epoch {history.best_epoch}")
    print(f"test ROC AUC {test_report.roc_auc:.4f}  test PR AUC {test_report.pr_auc:.4f}")
    print(f"outputs in {out_dir}")
    return 0


def cmd_eval(args) -> int:
    run_cfg = load_run_config(args.config, args.set)
    model = model_from_checkpoint(args.checkpoint)
    run_cfg.model = model.config
    if args.horizon not in run_cfg.horizons:
        raise ValueError(f"horizon {args.horizon} not in configured horizons {run_cfg.horizons}")
    samples = _build_samples(args.data, run_cfg, args.horizon)
    train_s, val_s, test_s = split_chronological(samples)
    block = {"train": train_s, "val": val_s, "test": test_s}[args.split]
    rep = evaluate(model, block)
    print(f"{args.split} ROC AUC {rep.roc_auc:.4f}  PR AUC {rep.pr_auc:.4f}  (n={len(block)})")
    if args.manifest:
        manifest = _config_manifest(run_cfg)
        manifest.update(
            {
                "command": "eval",
                "split": args.split,
                "horizon": args.horizon,
                "data_sha256": _sha256(args.data),
                "checkpoint": str(args.checkpoint),
                "metrics.roc_auc": rep.roc_auc,
                "metrics.pr_auc": rep.pr_auc,
            }
        )
        write_manifest(args.manifest, manifest)
    return 0


def _benchmark_cell(kind: str, samples, run_cfg: RunConfig, cell_seed: int):
    """(roc, pr) for one model on one patient/horizon, or None on a degenerate cell."""
    try:
        train_s, val_s, test_s = split_chronological(samples)
        if kind.startswith("seizureformer"):
            model_cfg = dataclasses.replace(run_cfg.model)
            suffix = kind[len("seizureformer"):].lstrip("-")
            if suffix:
                for key, value in ABLATIONS[suffix.replace("no-", "")].items():
                    setattr(model_cfg, key, value)
            train_cfg = dataclasses.replace(run_cfg.train, seed=cell_seed)
            model = SeizureFormer(model_cfg, np.random.default_rng(cell_seed))
            train_loop(model, train_s, val_s, train_cfg)
            rep = evaluate(model, test_s)
        elif kind == "logistic":
            fit = baselines.logistic_fit(baselines.window_features(train_s), [s.y for s in train_s])
            scores = baselines.logistic_predict(fit, baselines.window_features(test_s))
            rep = _score_report(scores, test_s)
        elif kind == "poisson":
            fit = baselines.poisson_fit(baselines.window_features(train_s), baselines.horizon_counts(train_s))
            scores = baselines.poisson_predict(fit, baselines.window_features(test_s))
            rep = _score_report(scores, test_s)
        elif kind == "dlinear":
            model = baselines.DLinearModel(
                run_cfg.model.lookback, run_cfg.model.channels, rng=np.random.default_rng(cell_seed)
            )
            train_cfg = dataclasses.replace(run_cfg.train, seed=cell_seed)
            train_loop(model, train_s, val_s, train_cfg)
            rep = evaluate(model, test_s)
        else:
            raise ValueError(f"unknown benchmark model {kind!r}")
        return rep.roc_auc, rep.pr_auc
    except (DataError, ValueError, FloatingPointError):
        return None


def _score_report(scores, samples):
    from . import metrics

    return metrics.report(scores, [s.y for s in samples])


def cmd_benchmark(args) -> int:
    run_cfg = load_run_config(args.config, args.set)
    seeds = [int(s) for s in args.cohort_seeds.split(",") if s.strip()]
    horizons = [int(h) for h in args.horizons.split(",") if h.strip()]
    if not seeds:
        raise ValueError("need at least one cohort seed")
    if len(set(seeds)) != len(seeds):
        raise ValueError("cohort seeds must be unique")
    for h in horizons:
        if h not in run_cfg.horizons:
            raise ValueError(f"horizon {h} not in configured horizons {run_cfg.horizons}")

    # samples per (seed, horizon), shared across every model for like-for-like cells
    cohort = {}
    for seed in seeds:
        series = synth.generate_patient(synth.SynthConfig(seed=seed, days=args.days))
        normalized = zscore_normalize(series)
        labels = label_days(series, run_cfg.label_window, run_cfg.label_fraction, run_cfg.min_history)
        for horizon in horizons:
            cohort[(seed, horizon)] = make_windows(normalized, labels, run_cfg.model.lookback, horizon)

    rows = ["model,patient,horizon,roc_auc,pr_auc"]
    means = []
    for kind in BENCHMARK_MODELS:
        cells = []
        for seed in seeds:
            for horizon in horizons:
                cell_seed = run_cfg.train.seed + 10_000 * seed + 100 * horizon
                cell = _benchmark_cell(kind, cohort[(seed, horizon)], run_cfg, cell_seed)
                if cell is None:
                    rows.append(f"{kind},synth-{seed},{horizon},NA,NA")
                else:
                    rows.append(f"{kind},synth-{seed},{horizon},{cell[0]:.6f},{cell[1]:.6f}")
                    cells.append(cell)
        if cells:
            roc = sum(c[0] for c in cells) / len(cells)
            pr = sum(c[1] for c in cells) / len(cells)
            means.append(f"{kind},mean,all,{roc:.6f},{pr:.6f}")
        else:
            means.append(f"{kind},mean,all,NA,NA")
    rows.extend(means)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(rows) + "\n", encoding="utf-8", newline="\n")
    manifest = _config_manifest(run_cfg)
    manifest.update(
        {
            "command": "benchmark",
            "cohort_seeds": tuple(seeds),
            "benchmark_horizons": tuple(horizons),
            "days": args.days,
            "models": ",".join(BENCHMARK_MODELS),
        }
    )
    write_manifest(str(out) + ".manifest", manifest)
    print(f"wrote {len(rows) - 1} result rows to {out}")
    return 0


def cmd_gradcheck(args) -> int:
    results = gradcheck.run_all(epsilon=args.epsilon, threshold=args.threshold)
    failures = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        failures += 0 if res.passed else 1
        print(f"{status} {res.name} max_rel_error={res.max_rel_error:.3e}")
    print(f"{len(results) - failures}/{len(results)} gradient checks passed")
    if failures:
        raise FloatingPointError(f"{failures} gradient checks exceeded {args.threshold}")
    return 0


def _render_svg(dates, z, label_values) -> str:
    width, height, pad = 1000, 280, 20
    n = len(dates)
    span = max(n - 1, 1)
    lo = min(float(z.min()), -1.0)
    hi = max(float(z.max()), 1.0)

    def sx(i: int) -> float:
        return pad + (width - 2 * pad) * i / span

    def sy(v: float) -> float:
        return pad + (height - 2 * pad) * (hi - v) / (hi - lo)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    colors = ("#1f77b4", "#2ca02c")
    for c in range(z.shape[1]):
        pts = " ".join(f"{sx(i):.2f},{sy(float(z[i, c])):.2f}" for i in range(n))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{colors[c % 2]}" stroke-width="1"/>')
    for i in range(n):
        if label_values[i] == 1:
            parts.append(f'<rect x="{sx(i) - 2:.2f}" y="{pad / 2:.2f}" width="4" height="4" fill="#d62728"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_export_plot(args) -> int:
    run_cfg = load_run_config(args.config, args.set)
    series, _ = parse_csv(args.data)
    normalized = zscore_normalize(series)
    labels = label_days(series, run_cfg.label_window, run_cfg.label_fraction, run_cfg.min_history)

    lines = ["date,z_ch1,z_ch2,risk"]
    for i, day in enumerate(normalized.dates):
        risk = "" if labels.labels[i] == -1 else str(int(labels.labels[i]))
        lines.append(f"{day.isoformat()},{normalized.z[i, 0]!r},{normalized.z[i, 1]!r},{risk}")
    Path(args.out_csv).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    Path(args.out_svg).write_text(_render_svg(normalized.dates, normalized.z, labels.labels), encoding="utf-8")
    print(f"wrote {len(normalized.dates)} rows to {args.out_csv} and figure to {args.out_svg}")
    return 0


# -- parser -------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _add_config_flags(sub) -> None:
    sub.add_argument("--config", default=None, help="flat key=value config file")
    sub.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seizureformer", description=__doc__)
    subs = parser.add_subparsers(dest="command")

    p = subs.add_parser("synth", parents=[], help="generate a synthetic patient CSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--days", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("train", help="train on a CSV and write checkpoint + manifest")
    p.add_argument("--data", required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--out-dir", default="run")
    p.add_argument("--ablate", choices=sorted(ABLATIONS), default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("eval", help="evaluate a checkpoint on a data split")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--manifest", default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("benchmark", help="train all models over a seeded cohort")
    p.add_argument("--cohort-seeds", required=True, help="comma-separated seeds")
    p.add_argument("--horizons", default="1,3,7,14")
    p.add_argument("--days", type=int, default=1000)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = subs.add_parser("gradcheck", help="finite-difference check of ops and model")
    p.add_argument("--epsilon", type=float, default=gradcheck.DEFAULT_EPSILON)
    p.add_argument("--threshold", type=float, default=gradcheck.DEFAULT_THRESHOLD)
    p.set_defaults(func=cmd_gradcheck)

    p = subs.add_parser("export-plot", help="per-day plot data as CSV plus an SVG figure")
    p.add_argument("--data", required=True)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-svg", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_export_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not getattr(args, "func", None):
        parser.print_help()
        return 1
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
