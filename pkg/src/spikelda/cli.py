"""Command-line entry point: ``spikelda <subcommand> [options]``.

Options may also come from a JSON file given with ``--config``; explicit
flags override file values, which override built-in defaults. The seed
falls back to the ``SPIKELDA_SEED`` environment variable, then to
:data:`DEFAULT_SEED`.

Exit codes: 0 success, 2 invalid input or usage, 3 numerical or run
failure, 4 a diagnose assertion failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from . import diagnostics as diag
from .dataio import load_csv, load_features_csv
from .errors import (
    DomainError,
    InsufficientDataError,
    ParseError,
    SchemaError,
    SpikeLDAError,
    SplitError,
    ValidationError,
)
from .nsc import NSCModel
from .pclda import DEFAULT_ALPHA, DEFAULT_C, Threshold, TopS, fit_pclda
from .persist import load_model, save_model
from .simulate import (
    BlockDiag,
    EqualCorr,
    MethodConfig,
    MetricsRow,
    RandomCorr,
    SimSpec,
    rows_as_dicts,
    run_mc,
    summary_table,
)
from .tuning import CVPlan, cv_select_delta, cv_select_s, kfold_stratified, leave_one_out
from .whitening import choose_d_for, pooled_covariance

DEFAULT_SEED = 2024
SEED_ENV = "SPIKELDA_SEED"

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_ASSERT = 0, 2, 3, 4
_USAGE_ERRORS = (ValidationError, DomainError, InsufficientDataError, ParseError, SchemaError, SplitError)

DEFAULTS = {
    "simulate": dict(
        model="eqcorr", rho=0.5, block=20, rank=10, entry_dist="normal", p=800, n=100, n_test=100,
        reps=200, method="pclda", d=None, frac=0.9, selection="top_s", s=None, C=DEFAULT_C,
        alpha=DEFAULT_ALPHA, folds=5, threads=1, out=None, format="csv",
    ),
    "fit": dict(
        train=None, label_column="label", d=None, frac=0.9, selection="top_s", s=None,
        candidates="1-30", folds=5, C=DEFAULT_C, alpha=DEFAULT_ALPHA, model_out=None, format="csv",
    ),
    "predict": dict(model=None, input=None, label_column="label", out=None, format="csv"),
    "tune": dict(
        train=None, label_column="label", method="pclda", d=None, frac=0.9, candidates="1-30",
        folds=5, grid=30, out=None, format="csv",
    ),
    "diagnose": dict(
        theorem="all", p=[100, 200, 400], n=[250, 1000, 4000], reps=50, C=DEFAULT_C,
        alpha=DEFAULT_ALPHA, threads=1, out=None, format="csv", check=True, tolerance=0.2,
    ),
    "info": dict(model=None, format="json"),
}


class UsageError(ValidationError):
    pass


class AssertionFailure(Exception):
    pass


# -- parsing ---------------------------------------------------------------


def _common(sp: argparse.ArgumentParser, seed: bool = True) -> None:
    sp.add_argument("--config", help="JSON file of option values (flags take precedence)")
    if seed:
        sp.add_argument("--seed", type=int, help=f"base seed (default: ${SEED_ENV} or {DEFAULT_SEED})")
    sp.add_argument("--format", choices=("csv", "json"), help="table output format (default csv)")


def _selection_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--d", type=int, help="number of spikes; omit for the variance-fraction rule")
    sp.add_argument("--frac", type=float, help="variance fraction for choosing d (default 0.9)")
    sp.add_argument("--selection", choices=("top_s", "threshold"), help="feature selection mode")
    sp.add_argument("--s", type=int, help="number of kept coordinates; omit to tune by CV")
    sp.add_argument("--C", type=float, help=f"threshold constant (default {DEFAULT_C})")
    sp.add_argument("--alpha", type=float, help=f"threshold exponent (default {DEFAULT_ALPHA})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikelda", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"spikelda {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="Monte Carlo benchmark on a simulation model")
    _common(sp)
    sp.add_argument("--model", choices=("eqcorr", "block", "random"), help="covariance family")
    sp.add_argument("--rho", type=float, help="correlation for eqcorr and block")
    sp.add_argument("--block", type=int, help="first block size for the block model (default 20)")
    sp.add_argument("--rank", type=int, help="factor rank for the random model (default 10)")
    sp.add_argument("--entry-dist", dest="entry_dist", choices=("normal", "uniform", "t5"),
                    help="entry distribution of the random model's factor")
    sp.add_argument("--p", type=int, help="dimension (default 800)")
    sp.add_argument("--n", type=int, help="training samples per class (default 100)")
    sp.add_argument("--n-test", dest="n_test", type=int, help="test samples per class (default 100)")
    sp.add_argument("--reps", type=int, help="Monte Carlo replicates (default 200)")
    sp.add_argument("--method", choices=("oracle", "pclda", "nsc"), help="classifier")
    _selection_flags(sp)
    sp.add_argument("--folds", type=int, help="CV folds for tuning (default 5)")
    sp.add_argument("--threads", type=int, help="worker threads; results do not depend on it")
    sp.add_argument("--out", help="output prefix; writes <out>_replicates.csv and <out>_summary.*")

    sp = sub.add_parser("fit", help="fit binary PCLDA on a labelled CSV and save the model")
    _common(sp)
    sp.add_argument("--train", help="training CSV")
    sp.add_argument("--label-column", dest="label_column", help="label column name (default 'label')")
    _selection_flags(sp)
    sp.add_argument("--candidates", help="s candidates for CV, e.g. '1-30' or '2,4,8'")
    sp.add_argument("--folds", help="CV folds: an integer (default 5) or 'loo' for leave-one-out")
    sp.add_argument("--model-out", dest="model_out", help="where to write the model JSON")

    sp = sub.add_parser("predict", help="classify rows of a CSV with a saved model")
    _common(sp, seed=False)
    sp.add_argument("--model", help="model JSON written by 'fit'")
    sp.add_argument("--input", help="feature CSV (a label column, if present, is used for scoring)")
    sp.add_argument("--label-column", dest="label_column", help="label column name (default 'label')")
    sp.add_argument("--out", help="prediction CSV (default stdout)")

    sp = sub.add_parser("tune", help="cross-validated error curve for s (PCLDA) or delta (NSC)")
    _common(sp)
    sp.add_argument("--train", help="training CSV")
    sp.add_argument("--label-column", dest="label_column", help="label column name (default 'label')")
    sp.add_argument("--method", choices=("pclda", "nsc"), help="which tuning parameter")
    sp.add_argument("--d", type=int, help="number of spikes; omit for the variance-fraction rule")
    sp.add_argument("--frac", type=float, help="variance fraction for choosing d (default 0.9)")
    sp.add_argument("--candidates", help="s candidates, e.g. '1-30' or '2,4,8'")
    sp.add_argument("--folds", help="CV folds: an integer (default 5) or 'loo' for leave-one-out")
    sp.add_argument("--grid", type=int, help="number of NSC shrinkage values (default 30)")
    sp.add_argument("--out", help="output file (default stdout)")

    sp = sub.add_parser("diagnose", help="rate and support-recovery tables on a spiked model")
    _common(sp)
    sp.add_argument("--theorem", choices=("1", "2", "3", "all"), help="which table to produce")
    sp.add_argument("--p", type=int, nargs="+", help="dimensions of the grid")
    sp.add_argument("--n", type=int, nargs="+", help="total sample sizes of the grid")
    sp.add_argument("--reps", type=int, help="replicates per cell (>= 10)")
    sp.add_argument("--C", type=float, help="threshold constant")
    sp.add_argument("--alpha", type=float, help="threshold exponent")
    sp.add_argument("--threads", type=int, help="worker threads")
    sp.add_argument("--tolerance", type=float, help="relative slack on decay factors (default 0.2)")
    sp.add_argument("--no-check", dest="check", action="store_const", const=False,
                    help="report tables without asserting decay factors")
    sp.add_argument("--out", help="output prefix; writes <out>_theorem<k>.csv")

    sp = sub.add_parser("info", help="version, defaults and an optional model summary")
    sp.add_argument("--config", help="JSON file of option values")
    sp.add_argument("--model", help="model JSON to describe")
    sp.add_argument("--format", choices=("csv", "json"), help="ignored; info is always JSON")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over config-file values over defaults."""
    defaults = DEFAULTS[args.command]
    config = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file {path} does not exist")
        try:
            config = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(config, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = sorted(set(config) - set(defaults) - {"seed"})
        if unknown:
            raise UsageError(f"unknown config keys for '{args.command}': {unknown}")
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config")}
    merged = {**defaults, **config, **flags}
    if "seed" in vars(args):
        merged["seed"] = _seed(flags.get("seed", config.get("seed")))
    return merged


def _seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"${SEED_ENV} must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def parse_candidates(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out or min(out) < 1:
        raise UsageError(f"bad candidate list {text!r}")
    return sorted(set(out))


def _need(cfg: dict, *keys: str) -> None:
    for key in keys:
        if cfg.get(key) is None:
            raise UsageError(f"--{key.replace('_', '-')} is required")
        if key in ("train", "input", "model") and not Path(cfg[key]).is_file():
            raise UsageError(f"{cfg[key]}: no such file")


# -- output -----------------------------------------------------------------------


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    return v


def write_table(rows: list[dict], dest, columns=None, fmt: str = "csv") -> None:
    """Write rows as CSV (or a JSON array) to a path, or stdout when ``dest`` is None."""
    columns = list(columns or (rows[0].keys() if rows else []))
    if fmt == "json":
        text = json.dumps([{c: _jsonable(r[c]) for c in columns} for r in rows], indent=2) + "\n"
    else:
        lines = []

        class _Sink:
            def write(self, s):
                lines.append(s)

        writer = csv.writer(_Sink(), lineterminator="\n")
        writer.writerow(columns)
        for r in rows:
            writer.writerow([_cell(r[c]) for c in columns])
        text = "".join(lines)
    if dest is None:
        sys.stdout.write(text)
    else:
        Path(dest).write_text(text, encoding="utf-8")


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, float) and not np.isfinite(v):
        return None
    return v


# -- subcommands ---------------------------------------------------------------------


def _sim_spec(cfg: dict) -> SimSpec:
    if cfg["model"] == "eqcorr":
        model = EqualCorr(float(cfg["rho"]))
    elif cfg["model"] == "block":
        model = BlockDiag(float(cfg["rho"]), int(cfg["block"]))
    else:
        model = RandomCorr(int(cfg["rank"]), cfg["entry_dist"])
    if model.__class__ is not RandomCorr and not 0 <= model.rho < 1:
        raise UsageError(f"--rho must lie in [0, 1), got {model.rho}")
    for key in ("p", "n", "n_test", "reps", "threads"):
        if int(cfg[key]) < 1:
            raise UsageError(f"--{key.replace('_', '-')} must be positive")
    return SimSpec(model, int(cfg["p"]), int(cfg["n"]), int(cfg["n_test"]))


def _int(value, name: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise UsageError(f"--{name} must be an integer, got {value!r}") from None


def _method(cfg: dict) -> MethodConfig:
    return MethodConfig(
        name=cfg["method"], d=cfg["d"], frac=float(cfg["frac"]), selection=cfg["selection"],
        s=cfg["s"], cv_folds=_int(cfg["folds"], "folds"), C=float(cfg["C"]), alpha=float(cfg["alpha"]),
    )


def cmd_simulate(cfg: dict) -> int:
    spec = _sim_spec(cfg)
    method = _method(cfg)
    result = run_mc(spec, method, int(cfg["reps"]), cfg["seed"], int(cfg["threads"]))
    summary = summary_table(result)
    if cfg["out"] is None:
        write_table(summary, None, fmt=cfg["format"])
        return EXIT_OK
    prefix = Path(cfg["out"])
    write_table(rows_as_dicts(result), f"{prefix}_replicates.csv", MetricsRow.COLUMNS)
    if cfg["format"] == "json":
        doc = {
            "spec": {"model": type(spec.model).__name__, **asdict(spec.model),
                     "p": spec.p, "n_train": spec.n_train, "n_test": spec.n_test},
            "method": {k: v for k, v in asdict(method).items() if k != "s_candidates"},
            "reps": int(cfg["reps"]),
            "seed": cfg["seed"],
            "failures": {str(k): v for k, v in result.failures.items()},
            "summary": result.summary(),
        }
        Path(f"{prefix}_summary.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    else:
        write_table(summary, f"{prefix}_summary.csv")
    return EXIT_OK


def cv_plan(folds, train, seed: int) -> CVPlan:
    """``folds`` is a fold count or ``"loo"``."""
    if str(folds).lower() == "loo":
        return leave_one_out(train.n)
    try:
        k = int(folds)
    except ValueError:
        raise UsageError(f"--folds must be an integer or 'loo', got {folds!r}") from None
    return kfold_stratified(train.labels, k, seed)


def pclda_workflow(
    train, d=None, frac: float = 0.9, s=None, candidates=range(1, 31), folds="loo", seed: int = DEFAULT_SEED,
    selection: str = "top_s", C: float = DEFAULT_C, alpha: float = DEFAULT_ALPHA,
):
    """Fit binary PCLDA the way the command line does: d by the variance rule, s by CV.

    Returns the fitted model and the chosen d.
    """
    if d is None:
        d = choose_d_for(pooled_covariance(train), frac)
    if selection == "threshold":
        mode = Threshold(C, alpha)
    elif s is not None:
        mode = TopS(int(s))
    else:
        cands = [c for c in candidates if c <= train.p]
        best, _ = cv_select_s(train, d, cands, plan=cv_plan(folds, train, seed))
        mode = TopS(best)
    return fit_pclda(train, d, mode), d


def cmd_fit(cfg: dict) -> int:
    _need(cfg, "train", "model_out")
    train = load_csv(cfg["train"], cfg["label_column"])
    if train.n_classes != 2:
        raise UsageError(f"fit handles two classes; {cfg['train']} has {train.n_classes}")
    model, _ = pclda_workflow(
        train, cfg["d"], float(cfg["frac"]), cfg["s"], parse_candidates(cfg["candidates"]), cfg["folds"],
        cfg["seed"], cfg["selection"], float(cfg["C"]), float(cfg["alpha"]),
    )
    save_model(model, cfg["model_out"])
    wrong = int(np.sum(model.predict_index(train.features) != train.y))
    report = {
        "n": train.n, "p": train.p, "d": model.d, "model_size": int(model.selected.size),
        "training_errors": wrong, "threshold": model.threshold,
    }
    write_table([report], None, fmt=cfg["format"])
    return EXIT_OK


def cmd_predict(cfg: dict) -> int:
    _need(cfg, "model", "input")
    model = load_model(cfg["model"])
    features, labels, _ = load_features_csv(cfg["input"], cfg["label_column"])
    if features.shape[1] != model.p:
        raise UsageError(f"model expects {model.p} features, {cfg['input']} has {features.shape[1]}")
    pred = model.predict(features)
    rows = [{"label": _jsonable(v)} for v in pred]
    write_table(rows, cfg["out"], ["label"], cfg["format"])
    if labels is not None:
        wrong = int(sum(str(a) != str(b) for a, b in zip(pred, labels)))
        print(f"errors: {wrong}/{len(labels)}", file=sys.stderr)
    return EXIT_OK


def cmd_tune(cfg: dict) -> int:
    _need(cfg, "train")
    train = load_csv(cfg["train"], cfg["label_column"])
    if cfg["method"] == "nsc":
        plan = cv_plan(cfg["folds"], train, cfg["seed"])
        best, errors = cv_select_delta(train, None, grid=int(cfg["grid"]), plan=plan)
        rows = [{"delta": k, "cv_error": v, "chosen": k == best} for k, v in errors.items()]
        for r in rows:
            r["model_size"] = int(NSCModel.fit(train, r["delta"]).active_features.size)
        write_table(rows, cfg["out"], ["delta", "cv_error", "model_size", "chosen"], cfg["format"])
        return EXIT_OK
    d = cfg["d"]
    if d is None:
        d = choose_d_for(pooled_covariance(train), float(cfg["frac"]))
    candidates = [s for s in parse_candidates(cfg["candidates"]) if s <= train.p]
    best, errors = cv_select_s(train, d, candidates, plan=cv_plan(cfg["folds"], train, cfg["seed"]))
    rows = [{"s": k, "cv_error": v, "chosen": k == best} for k, v in errors.items()]
    write_table(rows, cfg["out"], ["s", "cv_error", "chosen"], cfg["format"])
    return EXIT_OK


def check_decay(rows, metric: str, tolerance: float) -> list[str]:
    """Messages for consecutive cells whose decay misses (n_a / n_b)^(1/2) by more than ``tolerance``."""
    problems = []
    for (p, na, nb), factor in diag.decay_factors(rows, metric).items():
        target = (na / nb) ** 0.5
        if not target * (1 - tolerance) <= factor <= target * (1 + tolerance):
            problems.append(f"{metric} at p={p}, n {na}->{nb}: factor {factor:.3f}, expected {target:.3f}")
    return problems


def cmd_diagnose(cfg: dict) -> int:
    grid = tuple((int(n), int(p)) for p in cfg["p"] for n in sorted(cfg["n"]))
    dcfg = diag.DiagnosticsConfig(
        grid=grid, reps=int(cfg["reps"]), C=float(cfg["C"]), alpha=float(cfg["alpha"]),
        seed=cfg["seed"], threads=int(cfg["threads"]),
    )
    which = ("1", "2", "3") if cfg["theorem"] == "all" else (cfg["theorem"],)
    problems = []
    for k in which:
        if k == "1":
            rows = diag.rate_check_theorem1(dcfg)
            problems += check_decay(rows, "eigvec_2inf_aligned", float(cfg["tolerance"]))
        elif k == "2":
            rows = diag.rate_check_theorem2(dcfg)
            problems += check_decay(rows, "zeta_inf", float(cfg["tolerance"]))
        else:
            rows = diag.selection_consistency_check(dcfg)
            if not diag.nondecreasing_in_n(rows):
                problems.append("support recovery fraction decreases with n")
        dest = None if cfg["out"] is None else f"{cfg['out']}_theorem{k}.{cfg['format']}"
        write_table([r.as_dict() for r in rows], dest, diag.RATE_COLUMNS, cfg["format"])
    if cfg["check"] and problems:
        raise AssertionFailure("; ".join(problems))
    return EXIT_OK


def cmd_info(cfg: dict) -> int:
    import scipy

    doc = {
        "spikelda": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "default_seed": DEFAULT_SEED,
        "seed_env": SEED_ENV,
        "threshold_defaults": {"C": DEFAULT_C, "alpha": DEFAULT_ALPHA},
    }
    if cfg["model"] is not None:
        _need(cfg, "model")
        m = load_model(cfg["model"])
        doc["model"] = {
            "p": m.p, "d": m.d, "classes": list(m.classes), "counts": list(m.counts),
            "selected": m.selected.tolist(), "selection_mode": m.selection.describe(),
            "threshold": m.threshold,
        }
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate, "fit": cmd_fit, "predict": cmd_predict,
    "tune": cmd_tune, "diagnose": cmd_diagnose, "info": cmd_info,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except AssertionFailure as exc:
        print(f"spikelda: assertion failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except (*_USAGE_ERRORS, FileNotFoundError, ValueError, TypeError) as exc:
        print(f"spikelda: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SpikeLDAError as exc:
        print(f"spikelda: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
