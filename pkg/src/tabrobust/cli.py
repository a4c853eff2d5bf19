"""Command-line entry point.

Settings are merged as: built-in defaults < ``--config`` JSON file < flags.
The merged configuration is written to ``<out>/effective_config.json``.

Exit codes: 0 success, 1 internal error, 2 configuration error, 3 data error,
4 a self-test check failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from .data import DataError
from .model import save_params
from .pipeline import OUT_ENV, ConfigError, Pipeline, RunConfig, full_report, write_config
from .report import (RunReport, emit_curve_csv, emit_grid_csv, emit_history_csv, emit_metrics_csv, emit_report,
                     emit_sensitivity_csv, emit_table_csv)
from .selftest import run_selftest

log = logging.getLogger("tabrobust")

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3, 4


def _csv_list(cast):
    def parse(text):
        try:
            return [cast(t) for t in text.split(",") if t.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def _synthetic(text):
    parts = text.split(",")
    if len(parts) not in (3, 4):
        raise argparse.ArgumentTypeError("expected n,d,separation[,seed]")
    out = {"n": int(parts[0]), "d": int(parts[1]), "separation": float(parts[2])}
    if len(parts) == 4:
        out["seed"] = int(parts[3])
    return out


def _common(p: argparse.ArgumentParser):
    S = argparse.SUPPRESS
    g = p.add_argument_group("data")
    g.add_argument("--config", default=None, help="JSON file of settings (flags take precedence)")
    g.add_argument("--data", default=S, help="input CSV with a header row")
    g.add_argument("--label-col", dest="label_col", default=S)
    g.add_argument("--synthetic", type=_synthetic, default=S, metavar="N,D,SEP[,SEED]",
                   help="use a two-Gaussian synthetic dataset instead of --data")
    g.add_argument("--max-rows", dest="max_rows", type=int, default=S, help="seeded row subsample before splitting")
    g.add_argument("--split", type=float, default=S, help="train fraction (default 0.8)")
    g.add_argument("--split-seed", dest="split_seed", type=int, default=S)
    g.add_argument("--seed", dest="seed", type=int, default=S, help="single training seed")
    g.add_argument("--seeds", type=_csv_list(int), default=S, help="comma-separated training seeds (default 0,1,2)")
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int, default=S)
    g.add_argument("--lr", dest="learning_rate", type=float, default=S)
    g.add_argument("--batch-size", dest="batch_size", type=int, default=S)
    g.add_argument("--hidden", type=_csv_list(int), default=S)
    g = p.add_argument_group("attacks")
    g.add_argument("--attack", dest="attacks", type=_csv_list(str), default=S, help="fgsm,pgd")
    g.add_argument("--eps-max", dest="eps_max", type=float, default=S)
    g.add_argument("--eps-steps", dest="eps_steps", type=int, default=S)
    g.add_argument("--alpha", type=float, default=S)
    g.add_argument("--iters", type=int, default=S)
    g.add_argument("--random-start", dest="random_start", action="store_true", default=S)
    g.add_argument("--metrics-eps", dest="metrics_eps", type=float, default=S)
    g.add_argument("--positive-class", dest="positive_class", type=int, default=S)
    g = p.add_argument_group("explainability")
    g.add_argument("--explain-samples", dest="explain_samples", type=int, default=S)
    g.add_argument("--background", type=int, default=S)
    g.add_argument("--permutations", type=int, default=S)
    g.add_argument("--drift-eps", dest="drift_eps", type=float, default=S)
    g.add_argument("--drift-attack", dest="drift_attack", default=S)
    g.add_argument("--attribution-output", dest="attribution_output", choices=["proba", "log_odds"], default=S)
    g.add_argument("--top-k", dest="top_k", type=int, default=S)
    g.add_argument("--exact", action="store_true", default=S, help="exact Shapley enumeration (<= 12 features)")
    g = p.add_argument_group("adversarial training")
    g.add_argument("--adv-frac", dest="adv_frac", type=float, default=S)
    g.add_argument("--adv-eps", dest="adv_eps", type=float, default=S)
    g.add_argument("--adv-attack", dest="adv_attack", default=S)
    g.add_argument("--augment-mode", dest="augment_mode", choices=["replace", "append"], default=S)
    g.add_argument("--baseline-only", dest="baseline_only", action="store_true", default=S)
    g = p.add_argument_group("output")
    g.add_argument("--out", default=S, help=f"output directory (default ${OUT_ENV} or ./tabrobust-out)")
    g.add_argument("--timestamp", default=S, help="value recorded in provenance; 'now' for the current UTC time")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tabrobust", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("train", "train one model per seed and write checkpoints"),
                        ("sweep", "FGSM/PGD accuracy-epsilon curves, Robustness Index, extended metrics"),
                        ("explain", "gradient sensitivity, Shapley drift and the drift heatmap grid"),
                        ("ablation", "baseline vs adversarially trained comparison table"),
                        ("run", "every stage, one report")]:
        _common(sub.add_parser(name, help=help_))
    st = sub.add_parser("selftest", help="oracle checks on synthetic data")
    st.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    merged = {}
    if args.config:
        try:
            merged.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "command", "verbose")}
    if "seed" in flags:
        flags["seeds"] = [flags.pop("seed")]
    if flags.get("timestamp") == "now":
        flags["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    if "data" in flags:
        merged.pop("synthetic", None)
    if "synthetic" in flags:
        merged.pop("data", None)
    merged.update(flags)
    return RunConfig.from_mapping(merged)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out)
    return out


def cmd_train(cfg: RunConfig) -> int:
    pipe = Pipeline(cfg)
    out = _out_dir(cfg)
    for s in cfg.seeds:
        save_params(pipe.model(s), out / f"model_seed{s}.json")
        emit_history_csv(pipe.history(s), out / f"history_seed{s}.csv")
    rep = RunReport(provenance=pipe.provenance)
    rep.extra["histories"] = {str(s): pipe.history(s).to_dict() for s in cfg.seeds}
    emit_report(rep, out / "train_report.json")
    return EXIT_OK


def _write_curves(curves: dict, out: Path, prefix="curve"):
    for key, c in curves.items():
        emit_curve_csv(c, out / f"{prefix}_{key.replace('/', '_').lower()}.csv")


def cmd_sweep(cfg: RunConfig) -> int:
    pipe = Pipeline(cfg)
    out = _out_dir(cfg)
    curves = pipe.curves()
    _write_curves(curves, out)
    metrics = pipe.extended_metrics(curves)
    emit_metrics_csv(metrics, out / "metrics.csv")
    rep = RunReport(provenance=pipe.provenance, curves=[dict(c.to_dict(), key=k) for k, c in curves.items()],
                    metrics=metrics)
    rep.extra["gradient_slope_diagnostic"] = pipe.gradient_diagnostic(curves)
    emit_report(rep, out / "sweep_report.json")
    for key, c in curves.items():
        if key.endswith("/mean"):
            print(f"{c.attack_kind}: clean {c.accuracies[0]:.4f}  RI {c.ri:.4f}")
    return EXIT_OK


def cmd_explain(cfg: RunConfig) -> int:
    pipe = Pipeline(cfg)
    out = _out_dir(cfg)
    sens, dphi, grid, rho = pipe.explain()
    emit_sensitivity_csv(sens, dphi, out / "sensitivity.csv")
    emit_grid_csv(grid, out / "drift_grid.csv")
    rep = RunReport(provenance=pipe.provenance, sensitivity=dict(sens.to_dict(), spearman_vs_drift=rho),
                    drift=dict(grid.to_dict(), delta_phi=dphi.tolist(), delta_phi_epsilon=cfg.drift_eps,
                               attribution_output=cfg.attribution_output,
                               estimator="exact" if cfg.exact else "permutation"))
    emit_report(rep, out / "explain_report.json")
    top = ", ".join(grid.feature_names[j] for j in sens.ranking()[:5])
    print(f"most sensitive features: {top}")
    return EXIT_OK


def cmd_ablation(cfg: RunConfig) -> int:
    pipe = Pipeline(cfg)
    out = _out_dir(cfg)
    rec = pipe.ablation()
    emit_table_csv(rec, out / "ablation_table.csv")
    _write_curves(rec.curves, out, prefix="ablation")
    emit_report(RunReport(provenance=pipe.provenance, ablation=rec.to_dict()), out / "ablation_report.json")
    for r in rec.rows:
        delta = "--" if r.delta_ri is None else f"{r.delta_ri:+.3f}"
        print(f"{r.dataset} {r.model}: clean {r.clean_acc:.3f} RI_FGSM {r.ri_fgsm:.3f} RI_PGD {r.ri_pgd:.3f} "
              f"dRI {delta}")
    return EXIT_OK


def cmd_run(cfg: RunConfig) -> int:
    pipe = Pipeline(cfg)
    out = _out_dir(cfg)
    rep, parts = full_report(pipe)
    _write_curves(parts["curves"], out)
    emit_metrics_csv(rep.metrics, out / "metrics.csv")
    emit_sensitivity_csv(parts["sensitivity"], parts["delta_phi"], out / "sensitivity.csv")
    emit_grid_csv(parts["drift"], out / "drift_grid.csv")
    emit_table_csv(parts["ablation"], out / "ablation_table.csv")
    _write_curves(parts["ablation"].curves, out, prefix="ablation")
    emit_report(rep, out / "report.json")
    print(f"report written to {out / 'report.json'}")
    return EXIT_OK


def cmd_selftest(inject_fault: bool = False) -> int:
    results = run_selftest(inject_fault)
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


COMMANDS = {"train": cmd_train, "sweep": cmd_sweep, "explain": cmd_explain, "ablation": cmd_ablation, "run": cmd_run}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "selftest":
        return cmd_selftest(args.inject_fault)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
