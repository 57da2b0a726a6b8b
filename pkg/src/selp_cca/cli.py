"""Command-line interface: ``selp-cca {simulate, fit, study}``.

Every option can also come from a flat ``key = value`` file passed with
``--config``; flags win over the file, the file wins over built-in defaults.
Each run writes the resolved settings to ``config.txt`` in its output
directory. Failures print one JSON object on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, MalformedCsv, RowCountMismatch, SelpError
from .matkernel import CovarianceModel
from .scca import CcaConfig, CcaFit, fit
from .selp import SparseVector
from .simgen import METRIC_NAMES, SimulationSetting, build_covariance, run_study, sample_mvn
from .tuning import fit_cv

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
FLOAT_FMT = ".15g"
CONFIG_NAME = "config.txt"


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    key = str(text).strip().lower()
    if key in ("1", "true", "yes", "on"):
        return True
    if key in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_TYPES = {
    "setting": int, "n": int, "p": int, "q": int, "seed": int, "reps": int,
    "folds": int, "grid": int, "components": int, "max_iters": int,
    "tau_x": float, "tau_y": float, "cv": _bool,
    "x": str, "y": str, "model": str, "models": str, "out": str,
}

DEFAULTS = {
    "simulate": {"setting": 1, "n": 80, "p": 200, "q": None, "seed": 0, "out": None},
    "fit": {"x": None, "y": None, "model": "identity", "tau_x": 0.0, "tau_y": 0.0,
            "cv": False, "folds": 5, "grid": 8, "components": 1, "max_iters": 20,
            "seed": 0, "out": None},
    "study": {"setting": 1, "n": 80, "p": 200, "q": None, "reps": 20, "models": "identity",
              "folds": 5, "grid": 8, "seed": 0, "out": None},
}


# ----------------------------------------------------------------------------
# formatting and CSV I/O


def fmt(value) -> str:
    """Float with 15 significant digits; other values via ``str``."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), FLOAT_FMT)
    return "" if value is None else str(value)


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_matrix(path) -> np.ndarray:
    """Read a numeric CSV (rows are samples); a non-numeric first cell marks a header."""
    path = Path(path)
    rows: list[list[float]] = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, cells in enumerate(reader, start=1):
            if not cells or all(not c.strip() for c in cells):
                continue
            if lineno == 1 and not _is_number(cells[0].strip()):
                continue
            try:
                vals = [float(c) for c in cells]
            except ValueError:
                bad = next(c for c in cells if not _is_number(c))
                raise MalformedCsv(path, lineno, f"non-numeric cell {bad!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise MalformedCsv(path, lineno, "NaN or infinite value")
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise MalformedCsv(path, lineno, f"expected {width} columns, found {len(vals)}")
            rows.append(vals)
    if not rows:
        raise MalformedCsv(path, 1, "no data rows")
    return np.array(rows, dtype=float)


def write_matrix(path, A, header: list[str] | None = None) -> None:
    A = np.asarray(A, dtype=float)
    lines = [",".join(header)] if header else []
    lines += [",".join(format(v, FLOAT_FMT) for v in row) for row in A]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_table(path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


# ----------------------------------------------------------------------------
# configuration


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment line."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def resolve(command: str, flags: dict, config_path=None) -> dict:
    """Merge defaults, config file and flags (in increasing precedence)."""
    defaults = DEFAULTS[command]
    resolved = dict(defaults)
    if config_path is not None:
        for key, value in read_config(config_path).items():
            if key not in defaults:
                raise ConfigError(f"{config_path}: key {key!r} does not apply to {command}")
            try:
                resolved[key] = _TYPES[key](value) if value != "" else None
            except ValueError as exc:
                raise ConfigError(f"{config_path}: bad value for {key}: {exc}") from None
    for key, value in flags.items():
        if key in defaults and value is not None:
            resolved[key] = value
    if not resolved.get("out"):
        raise ConfigError("an output directory is required (--out)")
    return resolved


def write_resolved(out_dir: Path, command: str, cfg: dict) -> None:
    lines = [f"command = {command}"]
    lines += [f"{k} = {fmt(v)}" for k, v in sorted(cfg.items()) if v is not None]
    (out_dir / CONFIG_NAME).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ----------------------------------------------------------------------------
# fit artifact


def _sparse_json(v: SparseVector) -> dict:
    return {"length": v.length,
            "support": [[int(i), float(x)] for i, x in zip(v.indices, v.values)],
            "norm": v.norm}


def _sparse_from_json(obj) -> SparseVector:
    pairs = obj["support"]
    idx = np.array([int(i) for i, _ in pairs], dtype=np.intp)
    vals = np.array([float(x) for _, x in pairs], dtype=float)
    return SparseVector(int(obj["length"]), idx, vals)


def fit_to_artifact(result: CcaFit, cv_results=None) -> dict:
    comps = []
    for j in range(len(result)):
        c = result.component(j)
        comps.append({
            "component": j + 1,
            "rho_hat": c.rho,
            "iterations": c.iterations,
            "converged": c.converged,
            "flag": c.flag,
            "tau_x": c.tau_x,
            "tau_y": c.tau_y,
            "alpha": _sparse_json(c.alpha),
            "beta": _sparse_json(c.beta),
        })
    art = {"format_version": FORMAT_VERSION, "model": result.model.value, "components": comps}
    if cv_results:
        art["cv"] = [{"component": j + 1, "grid_x": r.grid_x, "grid_y": r.grid_y,
                      "upper": list(r.upper), "chosen": list(r.chosen)}
                     for j, r in enumerate(cv_results)]
    return art


def fit_from_artifact(art: dict) -> CcaFit:
    """Inverse of :func:`fit_to_artifact` (CV details are not restored)."""
    version = art.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported fit format version {version!r}")
    result = CcaFit(model=CovarianceModel.parse(art["model"]))
    for c in art["components"]:
        result.alphas.append(_sparse_from_json(c["alpha"]))
        result.betas.append(_sparse_from_json(c["beta"]))
        result.rhos.append(float(c["rho_hat"]))
        result.iterations.append(int(c["iterations"]))
        result.converged.append(bool(c["converged"]))
        result.flags.append(c["flag"])
        result.taus.append((float(c["tau_x"]), float(c["tau_y"])))
    return result


def read_fit(path) -> CcaFit:
    return fit_from_artifact(json.loads(Path(path).read_text(encoding="utf-8")))


def summary_table(result: CcaFit) -> str:
    head = ("component", "rho_hat", "support_x", "support_y", "tau_x", "tau_y",
            "iterations", "converged", "flag")
    rows = [head]
    for j in range(len(result)):
        c = result.component(j)
        rows.append((str(j + 1), f"{c.rho:.4f}", str(c.alpha.nnz), str(c.beta.nnz),
                     f"{c.tau_x:.4g}", f"{c.tau_y:.4g}", str(c.iterations),
                     fmt(c.converged), c.flag or "-"))
    widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
    return "\n".join("  ".join(cell.rjust(w) for cell, w in zip(r, widths)) for r in rows) + "\n"


# ----------------------------------------------------------------------------
# commands


def _setting(cfg: dict) -> SimulationSetting:
    return SimulationSetting(cfg["setting"], n=cfg["n"], p=cfg["p"], q=cfg["q"])


def cmd_simulate(cfg: dict) -> None:
    setting = _setting(cfg)
    Sigma, truth = build_covariance(setting)
    Z = sample_mvn(Sigma, setting.n, cfg["seed"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "X.csv", Z[:, :setting.p], [f"x{i + 1}" for i in range(setting.p)])
    write_matrix(out / "Y.csv", Z[:, setting.p:], [f"y{i + 1}" for i in range(setting.q)])
    doc = {"setting": setting.id, "n": setting.n, "p": setting.p, "q": setting.q,
           "seed": cfg["seed"]}
    doc.update(truth.to_json())
    _write_json(out / "truth.json", doc)
    write_resolved(out, "simulate", cfg)


def cmd_fit(cfg: dict) -> CcaFit:
    if not cfg.get("x") or not cfg.get("y"):
        raise ConfigError("fit needs both --x and --y")
    X = read_matrix(cfg["x"])
    Y = read_matrix(cfg["y"])
    if X.shape[0] != Y.shape[0]:
        raise RowCountMismatch(f"{cfg['x']} has {X.shape[0]} rows but "
                               f"{cfg['y']} has {Y.shape[0]}")
    config = CcaConfig(model=CovarianceModel.parse(cfg["model"]), tau_x=cfg["tau_x"],
                       tau_y=cfg["tau_y"], components=cfg["components"],
                       max_iters=cfg["max_iters"])
    cv_results = None
    if cfg["cv"]:
        result, cv_results = fit_cv(X, Y, config, cfg["grid"], cfg["grid"],
                                    cfg["folds"], cfg["seed"])
    else:
        result = fit(X, Y, config)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "fit.json", fit_to_artifact(result, cv_results))
    table = summary_table(result)
    (out / "summary.txt").write_text(table, encoding="utf-8")
    write_resolved(out, "fit", cfg)
    sys.stdout.write(table)
    return result


SUMMARY_ROWS = [(f"{m}_{b}", b, m) for m in METRIC_NAMES for b in ("alpha", "beta")]


def _mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return math.nan, math.nan
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return float(v.mean()), se


def study_tables(report):
    """``(metrics, summary, selections)`` as ``(header, rows)`` pairs."""
    metrics = []
    for rep, method, comp, block, name, value in report.rows:
        label = name if block == "pair" else f"{name}_{block}"
        metrics.append((rep, method, comp, label, value))
    head = ["component", "metric"]
    for m in report.methods:
        head += [f"{m}_mean", f"{m}_se"]
    summary = []
    for comp in range(1, report.components + 1):
        specs = [(label, lambda m, b=b, n=n: report.values(m, comp, b, n))
                 for label, b, n in SUMMARY_ROWS]
        specs.append(("rho_hat", lambda m: report.values(m, comp, "pair", "rho_hat")))
        for block in ("alpha", "beta"):
            specs.append((f"support_{block}", lambda m, b=block: [
                s[4] + s[5] for s in report.selections
                if s[1] == m and s[2] == comp and s[3] == b]))
        for label, getter in specs:
            row = [comp, label]
            for m in report.methods:
                row += list(_mean_se(getter(m)))
            summary.append(row)
    selections = [(rep, method, comp, block, tp, fp, tp + fp)
                  for rep, method, comp, block, tp, fp in report.selections]
    return ((["replicate", "method", "component", "metric", "value"], metrics),
            (head, summary),
            (["replicate", "method", "component", "block", "tp", "fp", "selected"], selections))


def cmd_study(cfg: dict):
    setting = _setting(cfg)
    if cfg["reps"] < 1:
        raise ConfigError("--reps must be >= 1")
    models = [CovarianceModel.parse(m) for m in str(cfg["models"]).split(",") if m.strip()]
    if not models:
        raise ConfigError("--models is empty")
    report = run_study(setting, cfg["reps"], models, cfg["folds"], cfg["grid"], cfg["seed"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (mh, mr), (sh, sr), (ch, cr) = study_tables(report)
    write_table(out / "metrics.csv", mh, mr)
    write_table(out / "summary.csv", sh, sr)
    write_table(out / "selection_counts.csv", ch, cr)
    write_resolved(out, "study", cfg)
    return report


# ----------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="selp-cca", description="Sparse CCA via linear programming.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="flat key = value file with defaults for this command")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")

    def dims(p):
        p.add_argument("--setting", type=int, choices=(1, 2, 3))
        p.add_argument("--n", type=int)
        p.add_argument("--p", type=int)
        p.add_argument("--q", type=int)

    sim = sub.add_parser("simulate", help="draw one dataset from a simulation setting")
    dims(sim)
    common(sim)

    f = sub.add_parser("fit", help="fit sparse canonical pairs to X.csv and Y.csv")
    f.add_argument("--x")
    f.add_argument("--y")
    f.add_argument("--model", choices=("identity", "ridge"))
    f.add_argument("--tau-x", type=float, dest="tau_x")
    f.add_argument("--tau-y", type=float, dest="tau_y")
    f.add_argument("--cv", action="store_const", const=True,
                   help="choose the taus of each component by cross-validation")
    f.add_argument("--folds", type=int)
    f.add_argument("--grid", type=int, help="grid points per tau axis")
    f.add_argument("--components", type=int)
    f.add_argument("--max-iters", type=int, dest="max_iters")
    common(f)

    st = sub.add_parser("study", help="Monte Carlo study over replicated datasets")
    dims(st)
    st.add_argument("--reps", type=int)
    st.add_argument("--models", help="comma-separated list of identity, ridge")
    st.add_argument("--folds", type=int)
    st.add_argument("--grid", type=int)
    common(st)
    return parser


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "study": cmd_study}


def _error_payload(exc: BaseException) -> dict:
    kind = exc.kind if isinstance(exc, SelpError) else type(exc).__name__
    payload = {"error": kind, "message": str(exc)}
    for attr in ("path", "line", "replicate", "index"):
        if hasattr(exc, attr):
            payload[attr] = str(getattr(exc, attr)) if attr == "path" else getattr(exc, attr)
    if isinstance(exc, OSError) and exc.filename is not None:
        payload["path"] = str(exc.filename)
    return payload


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
        if args.command == "fit" and args.cv and (args.tau_x is not None or args.tau_y is not None):
            raise ConfigError("--cv cannot be combined with --tau-x/--tau-y")
        cfg = resolve(args.command, flags, args.config)
        COMMANDS[args.command](cfg)
    except (SelpError, OSError, ValueError, RuntimeError) as exc:
        sys.stderr.write(json.dumps(_error_payload(exc)) + "\n")
        return 2 if isinstance(exc, ConfigError) else 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
