"""Execute a :class:`~invfilter.config.RunConfig` and write its artifacts."""

from __future__ import annotations

import hashlib
import json
import os
import platform
import time
from decimal import Decimal
from pathlib import Path

import numpy as np

from . import __version__, studies
from .config import RunConfig

TRAJECTORY_HEADER = ("n", "error", "bias_sq", "variance", "mse", "stderr")
SLOPES_HEADER = ("param_set", "predicted_exponent", "fitted_slope", "residual")
THREADS_ENV = "INVFILTER_NUM_THREADS"

_DEFAULTS = {
    "single_run": dict(replicates=1, n_iter=30),
    "rate_study_dm1": dict(replicates=20, N_list=(100, 200, 500, 1000, 1500, 2000, 2500, 3000),
                           s_values=(1.0, 2.0, 3.0)),
    "rate_study_dm2": dict(replicates=20, N_list=(100, 200, 500, 1000, 1500, 2000, 2500, 3000),
                           s_values=(1.0, 2.0)),
    "diagonal_minimax": dict(replicates=50, N_list=tuple(2 ** k for k in range(4, 13)),
                             gamma=1.0, n_modes=1000),
    "variant_blowup": dict(replicates=1000, n_iter=40, gamma=0.01, n_modes=200, q=0.5,
                           alpha=1.0),
    "oracle_suite": dict(replicates=1),
}


def resolve(cfg):
    """Experiment settings with per-experiment defaults filled in."""
    plan = dict(_DEFAULTS[cfg.experiment])
    for key in ("replicates", "n_iter", "N_list", "s_values", "gamma", "n_modes", "q",
                "alpha"):
        value = getattr(cfg, key)
        if value is not None:
            plan[key] = value
    if cfg.experiment.startswith("rate_study"):
        plan["filters"] = cfg.filters
    return plan


def execute(cfg):
    plan = resolve(cfg)
    exp = cfg.experiment
    if exp == "single_run":
        return studies.single_run(cfg.problem_spec(), cfg.filter, plan["n_iter"],
                                  plan["replicates"])
    if exp in ("rate_study_dm1", "rate_study_dm2"):
        fn = studies.rate_study_dm1 if exp.endswith("dm1") else studies.rate_study_dm2
        return fn(s_values=plan["s_values"], kinds=plan["filters"], N_list=plan["N_list"],
                  replicates=plan["replicates"], coarse_n=cfg.coarse_n, fine_n=cfg.fine_n,
                  a=cfg.a, gamma=cfg.gamma, seed=cfg.seed)
    if exp == "diagonal_minimax":
        return studies.diagonal_minimax(cfg.beta, cfg.eps, cfg.p, plan["N_list"],
                                        plan["replicates"], plan["gamma"], plan["n_modes"],
                                        seed=cfg.seed)
    if exp == "variant_blowup":
        return studies.variant_blowup(plan["q"], plan["alpha"], plan["n_iter"],
                                      plan["replicates"], plan["gamma"], plan["n_modes"],
                                      cfg.beta, cfg.eps, cfg.p, seed=cfg.seed)
    result = studies.StudyResult()
    checks = studies.oracle_suite()
    result.summary["oracles"] = [dict(name=c.name, passed=c.passed, detail=c.detail)
                                 for c in checks]
    result.summary["all_passed"] = all(c.passed for c in checks)
    return result


def _fmt(x):
    return "%.12e" % x


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(rows_i) for rows_i in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Decimal):
        return str(obj)
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def write_outputs(result, out_dir):
    """Write ``trajectory.csv``, ``slopes.csv`` and ``summary.json``.

    Multi-parameter studies put every parameter set's rows in
    ``trajectory.csv`` in the order of ``slopes.csv``; the row ranges are
    listed in the summary.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, ranges, start = [], {}, 0
    for label, records in result.trajectories.items():
        for r in records:
            rows.append([str(r.n)] + [_fmt(v) for v in r.as_row()[1:]])
        ranges[label] = [start, start + len(records)]
        start += len(records)
    _write_csv(out / "trajectory.csv", TRAJECTORY_HEADER, rows)
    _write_csv(out / "slopes.csv", SLOPES_HEADER,
               [[label, _fmt(pred), _fmt(fit), _fmt(res)]
                for label, pred, fit, res in result.slopes])
    summary = dict(result.summary, trajectory_rows=ranges)
    (out / "summary.json").write_text(
        json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return [out / "trajectory.csv", out / "slopes.csv", out / "summary.json"]


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def thread_limit():
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return n if n > 0 else None


def run(cfg: RunConfig, out_dir=None):
    """Run ``cfg``, write its artifacts and a manifest; return the result."""
    from threadpoolctl import threadpool_limits

    out_dir = Path(out_dir or cfg.output_dir)
    t0 = time.perf_counter()
    with threadpool_limits(limits=thread_limit()):
        result = execute(cfg)
    wall = time.perf_counter() - t0
    paths = write_outputs(result, out_dir)
    manifest = {
        "config": cfg.to_dict(),
        "resolved": _jsonable(resolve(cfg)),
        "seed": cfg.seed,
        "wall_time_s": wall,
        "checksums": {p.name: sha256(p) for p in paths},
        "version": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n",
                                           encoding="utf-8")
    return result
