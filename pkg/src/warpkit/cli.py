"""Command-line driver: synth, gram, eval, early.

A single JSON config file can carry every option; command-line flags
override file values.  All randomness flows from one seed.  Outputs are
written atomically and contain no timestamps, so re-running a command (or
changing the worker count) reproduces identical bytes.

Exit codes: 0 success, 2 configuration/validation error (fails fast, no
partial outputs), 3 computation error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .core import LabeledDataset, load_dataset, write_json_atomic, write_series_csv
from .evaluate import (
    EvalReport,
    early_curve,
    format_auc_table,
    grid_search,
    loso_evaluate,
    nested_grid_evaluate,
    write_early_csv,
    write_roc_csv,
)
from .exceptions import InvalidSpec, WarpkitError
from .kernels import KernelConfig, export_gram, gram_matrix
from .shape import synth_dataset

ENV_OUT = "WARPKIT_OUT"

_FAMILY_ALIASES = {
    "dtw": "pseudo_dtw",
    "pseudo_dtw": "pseudo_dtw",
    "ga": "global_alignment",
    "global_alignment": "global_alignment",
}


class ConfigError(Exception):
    """Invalid run configuration (maps to exit code 2)."""


@dataclass
class RunConfig:
    """Validated options for gram/eval/early runs."""

    manifest: str
    family: str
    t: float | None = None
    sigma: float | None = None
    C: float | None = None
    param_grid: list | None = None
    c_grid: list | None = None
    divergence: str | None = None
    band: int | None = None
    repair_mode: str = "exp_then_repair"
    repair_tol: float = 1e-7
    repair_max_iter: int = 200
    budgets: list = field(default_factory=lambda: list(range(2, 17)))
    out: str = "."
    workers: int = 1
    seed: int = 0

    def kernel_config(self, param: float | None = None) -> KernelConfig:
        try:
            if self.family == "pseudo_dtw":
                t = param if param is not None else self.t
                return KernelConfig(self.family, t=t, sigma=self.sigma,
                                    divergence=self.divergence, band=self.band)
            sigma = param if param is not None else self.sigma
            return KernelConfig(self.family, sigma=sigma, divergence=self.divergence,
                                band=self.band)
        except (WarpkitError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def _load_config_file(path) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return doc


def _merge(args, file_cfg: dict, key: str, default=None):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in file_cfg and file_cfg[key] is not None:
        return file_cfg[key]
    return default


def _build_run_config(args) -> RunConfig:
    file_cfg = _load_config_file(args.config) if args.config else {}
    manifest = _merge(args, file_cfg, "manifest")
    if not manifest:
        raise ConfigError("a dataset manifest is required (--manifest or config)")
    if not os.path.exists(manifest):
        raise ConfigError(f"manifest not found: {manifest}")
    family = _merge(args, file_cfg, "kernel")
    if family is None:
        raise ConfigError("a kernel family is required (--kernel dtw|ga)")
    if family not in _FAMILY_ALIASES:
        raise ConfigError(f"unknown kernel {family!r} (choose dtw or ga)")
    out = _merge(args, file_cfg, "out", os.environ.get(ENV_OUT, "."))
    budgets = _merge(args, file_cfg, "budgets", list(range(2, 17)))
    if isinstance(budgets, str):
        budgets = [int(b) for b in budgets.split(",") if b]
    budgets = [int(b) for b in budgets]
    if budgets and min(budgets) < 2:
        raise ConfigError(f"budgets must all be >= 2, got {budgets}")
    cfg = RunConfig(
        manifest=manifest,
        family=_FAMILY_ALIASES[family],
        t=_merge(args, file_cfg, "t"),
        sigma=_merge(args, file_cfg, "sigma"),
        C=_merge(args, file_cfg, "C"),
        param_grid=_merge(args, file_cfg, "param_grid"),
        c_grid=_merge(args, file_cfg, "C_grid"),
        divergence=_merge(args, file_cfg, "divergence"),
        band=_merge(args, file_cfg, "band"),
        repair_mode=_merge(args, file_cfg, "repair_mode", "exp_then_repair"),
        repair_tol=float(_merge(args, file_cfg, "repair_tol", 1e-7)),
        repair_max_iter=int(_merge(args, file_cfg, "repair_max_iter", 200)),
        budgets=budgets,
        out=out,
        workers=int(_merge(args, file_cfg, "workers", os.cpu_count() or 1)),
        seed=int(_merge(args, file_cfg, "seed", 0)),
    )
    if cfg.repair_mode not in ("exp_then_repair", "repair_then_exp"):
        raise ConfigError(f"unknown repair mode {cfg.repair_mode!r}")
    if cfg.param_grid is not None and not cfg.param_grid:
        raise ConfigError("param_grid must be nonempty when given")
    if cfg.c_grid is not None and not cfg.c_grid:
        raise ConfigError("C_grid must be nonempty when given")
    return cfg


def _ensure_out(out: str) -> str:
    os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# synth

def cmd_synth(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    out = _merge(args, file_cfg, "out", os.environ.get(ENV_OUT, "."))
    seed = int(_merge(args, file_cfg, "seed", 0))
    try:
        result = synth_dataset(
            n_classes=int(_merge(args, file_cfg, "classes", 6)),
            subjects_per_class=int(_merge(args, file_cfg, "subjects", 10)),
            frames_range=(int(_merge(args, file_cfg, "frames_min", 18)),
                          int(_merge(args, file_cfg, "frames_max", 22))),
            noise=float(_merge(args, file_cfg, "noise", 0.02)),
            seed=seed,
            n_landmarks=int(_merge(args, file_cfg, "landmarks", 10)),
            n_components=int(_merge(args, file_cfg, "components", 6)),
        )
    except InvalidSpec as exc:
        raise ConfigError(str(exc)) from exc

    out = _ensure_out(out)
    os.makedirs(os.path.join(out, "series"), exist_ok=True)
    os.makedirs(os.path.join(out, "landmarks"), exist_ok=True)

    entries, lm_entries, truth_items = [], [], []
    for k, item in enumerate(result.dataset.items):
        rel = f"series/{k:03d}.csv"
        write_series_csv(os.path.join(out, rel), item.series.values)
        entries.append({"path": rel, "label": item.label, "subject": item.subject})
        lm_item = result.landmark_dataset.items[k]
        lm_rel = f"landmarks/{k:03d}.csv"
        write_series_csv(os.path.join(out, lm_rel), lm_item.series.values)
        lm_entries.append({"path": lm_rel, "label": item.label, "subject": item.subject})
        truth_items.append({
            "index": k,
            "label": item.label,
            "subject": item.subject,
            "true_q": result.true_q[k].tolist(),
            "rigid": [r.to_dict() for r in result.rigid_params[k]],
        })

    write_json_atomic(os.path.join(out, "manifest.json"), entries)
    write_json_atomic(os.path.join(out, "manifest_landmarks.json"), lm_entries)
    write_json_atomic(os.path.join(out, "pdm.json"), result.pdm.to_dict())
    write_json_atomic(os.path.join(out, "groundtruth.json"), {
        "seed": seed,
        "templates": {
            name: {"target": tpl.target.tolist(), "curvature": tpl.curvature,
                   "delay": tpl.delay}
            for name, tpl in result.templates.items()
        },
        "shared_direction": result.shared_direction.tolist(),
        "subject_traits": result.subject_traits,
        "items": truth_items,
    })
    n = len(result.dataset)
    print(f"synth: wrote {n} sequences ({len(result.dataset.classes)} classes, "
          f"{len(result.dataset.subjects)} subjects) to {out}")
    return 0


# ---------------------------------------------------------------------------
# gram

def _order_by_label(ds: LabeledDataset) -> LabeledDataset:
    # label-major ordering makes the class-block structure visible in exports
    order = sorted(range(len(ds)), key=lambda k: (ds.items[k].label, k))
    return LabeledDataset(tuple(ds.items[k] for k in order))


def cmd_gram(args) -> int:
    cfg = _build_run_config(args)
    if cfg.family == "pseudo_dtw" and cfg.t is None:
        raise ConfigError("pseudo_dtw needs --t")
    if cfg.family == "global_alignment" and cfg.sigma is None:
        raise ConfigError("global_alignment needs --sigma")
    ds = _order_by_label(load_dataset(cfg.manifest))
    out = _ensure_out(cfg.out)
    result = gram_matrix(ds, cfg.kernel_config(), workers=cfg.workers,
                         repair_mode=cfg.repair_mode, repair_tol=cfg.repair_tol,
                         repair_max_iter=cfg.repair_max_iter)
    export_gram(result.gram, os.path.join(out, "gram.csv"),
                os.path.join(out, "gram.json"), repair=result.repair,
                series_lengths=[it.series.n_frames for it in ds.items])
    print(f"gram: {result.gram.size} x {result.gram.size} "
          f"{cfg.family} matrix written to {out}")
    return 0


# ---------------------------------------------------------------------------
# eval

def _report_to_files(report: EvalReport, out: str) -> None:
    write_json_atomic(os.path.join(out, "report.json"), report.to_dict())
    for cls, curve in report.roc_curves.items():
        write_roc_csv(curve, os.path.join(out, f"roc_{cls}.csv"))


def cmd_eval(args) -> int:
    cfg = _build_run_config(args)
    ds = load_dataset(cfg.manifest)
    out = _ensure_out(cfg.out)
    fixed_param = cfg.t if cfg.family == "pseudo_dtw" else cfg.sigma
    wants_grid = cfg.param_grid is not None or cfg.c_grid is not None or (
        fixed_param is None)
    # a fixed value pins its axis when only the other axis is gridded
    param_grid = cfg.param_grid
    if param_grid is None and fixed_param is not None:
        param_grid = [fixed_param]
    c_grid = cfg.c_grid
    if c_grid is None and cfg.C is not None:
        c_grid = [cfg.C]
    if getattr(args, "nested", False):
        if not wants_grid:
            raise ConfigError("--nested needs grids (or omit fixed parameters)")
        report = nested_grid_evaluate(ds, cfg.family, param_grid, c_grid,
                                      divergence=cfg.divergence, workers=cfg.workers,
                                      repair_tol=cfg.repair_tol,
                                      repair_max_iter=cfg.repair_max_iter)
    else:
        grid_table = None
        if wants_grid:
            result = grid_search(ds, cfg.family, param_grid, c_grid,
                                 divergence=cfg.divergence, workers=cfg.workers,
                                 repair_tol=cfg.repair_tol,
                                 repair_max_iter=cfg.repair_max_iter)
            best_param, best_c, grid_table = (result.best_param, result.best_C,
                                              result.table)
        else:
            best_param = fixed_param
            best_c = cfg.C if cfg.C is not None else 1.0
        report = loso_evaluate(ds, cfg.kernel_config(best_param), best_c,
                               workers=cfg.workers, repair_tol=cfg.repair_tol,
                               repair_max_iter=cfg.repair_max_iter)
        if grid_table is not None:
            # the same folds picked the parameters and scored them
            report.params["selection"] = "non_nested_optimistic"
            report.params["grid"] = grid_table
    _report_to_files(report, out)
    print(format_auc_table(report.per_class_auc, report.mean_auc))
    return 0


# ---------------------------------------------------------------------------
# early

def cmd_early(args) -> int:
    cfg = _build_run_config(args)
    if cfg.family == "pseudo_dtw" and cfg.t is None:
        raise ConfigError("early needs fixed kernel parameters (--t)")
    if cfg.family == "global_alignment" and cfg.sigma is None:
        raise ConfigError("early needs fixed kernel parameters (--sigma)")
    if not cfg.budgets:
        raise ConfigError("budgets must be nonempty")
    ds = load_dataset(cfg.manifest)
    out = _ensure_out(cfg.out)
    C = cfg.C if cfg.C is not None else 1.0
    curve = early_curve(ds, cfg.kernel_config(), C, budgets=cfg.budgets,
                        workers=cfg.workers, repair_tol=cfg.repair_tol,
                        repair_max_iter=cfg.repair_max_iter)
    for cls in ds.classes:
        write_early_csv(curve, cls, os.path.join(out, f"early_{cls}.csv"))
    summary = {
        "params": dict(cfg.kernel_config().to_dict(), C=C),
        "budgets": cfg.budgets,
        "per_class_auc": {str(b): curve[b] for b in cfg.budgets},
        "mean_auc": {str(b): float(np.mean(list(curve[b].values())))
                     for b in cfg.budgets},
    }
    write_json_atomic(os.path.join(out, "early_summary.json"), summary)
    lo, hi = min(cfg.budgets), max(cfg.budgets)
    print(f"early: budgets {lo}..{hi}, mean AUC "
          f"{summary['mean_auc'][str(lo)]:.3f} -> {summary['mean_auc'][str(hi)]:.3f}")
    return 0


# ---------------------------------------------------------------------------
# entry point

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--out", help=f"output directory (default ${ENV_OUT} or .)")
    common.add_argument("--workers", type=int, help="worker pool size")
    common.add_argument("--seed", type=int, help="master random seed")

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--manifest", help="dataset manifest JSON")
    run.add_argument("--kernel", help="kernel family: dtw or ga")
    run.add_argument("--t", type=float, help="pseudo-DTW temperature")
    run.add_argument("--sigma", type=float, help="GA bandwidth")
    run.add_argument("--C", type=float, help="SVM regularization")
    run.add_argument("--divergence", choices=["sq_euclidean", "phi_sigma"])
    run.add_argument("--band", type=int, help="optional Sakoe-Chiba band half-width")
    run.add_argument("--repair-mode", dest="repair_mode",
                     choices=["exp_then_repair", "repair_then_exp"])
    run.add_argument("--repair-tol", dest="repair_tol", type=float)
    run.add_argument("--repair-max-iter", dest="repair_max_iter", type=int)

    p = argparse.ArgumentParser(prog="warpkit",
                                description="Time-series classification with warping kernels")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("synth", parents=[common],
                        help="generate a synthetic labeled landmark study")
    ps.add_argument("--classes", type=int, help="number of classes (default 6)")
    ps.add_argument("--subjects", type=int, help="subjects per class (default 10)")
    ps.add_argument("--frames-min", dest="frames_min", type=int)
    ps.add_argument("--frames-max", dest="frames_max", type=int)
    ps.add_argument("--noise", type=float, help="landmark noise level (default 0.02)")
    ps.add_argument("--landmarks", type=int, help="landmark count (default 10)")
    ps.add_argument("--components", type=int, help="shape components (default 6)")
    ps.set_defaults(fn=cmd_synth)

    pg = sub.add_parser("gram", parents=[common, run],
                        help="compute and export a Gram matrix")
    pg.set_defaults(fn=cmd_gram)

    pe = sub.add_parser("eval", parents=[common, run],
                        help="LOSO evaluation (grid search when grids given)")
    pe.add_argument("--param-grid", dest="param_grid", type=_float_list,
                    help="comma list of kernel parameters")
    pe.add_argument("--C-grid", dest="C_grid", type=_float_list,
                    help="comma list of C values")
    pe.add_argument("--nested", action="store_true",
                    help="rerun the grid inside every fold (slow, unbiased)")
    pe.set_defaults(fn=cmd_eval)

    pearly = sub.add_parser("early", parents=[common, run],
                            help="early-classification frame-budget curves")
    pearly.add_argument("--budgets", help="comma list of frame budgets (default 2..16)")
    pearly.set_defaults(fn=cmd_early)
    return p


def _float_list(text: str) -> list:
    return [float(tok) for tok in text.split(",") if tok]


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, InvalidSpec) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except WarpkitError as exc:
        kind = type(exc).__name__
        # missing/malformed inputs are configuration problems, not compute ones
        if kind in ("MissingFile", "ManifestParse", "InvalidSpec"):
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(f"computation error [{kind}]: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
