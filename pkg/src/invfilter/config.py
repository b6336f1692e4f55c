"""Flat ``key = value`` run configuration.

Lines are ``key = value``; ``#`` starts a comment. Lists are comma separated.
``none`` leaves an optional key unset, in which case the experiment default
applies. An empty file runs a DM2 Kalman trajectory at 5% noise on the
60/120 grid pair.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

from .analysis import DM1, DM2
from .filters import FILTER_KINDS, KALMAN, THREEDVAR, VARIANT
from .problem import ALPHA_RULES, ProblemSpec

EXPERIMENTS = ("single_run", "rate_study_dm1", "rate_study_dm2", "diagonal_minimax",
               "variant_blowup", "oracle_suite")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """All run settings.

    ``replicates``, ``N_list``, ``s_values``, ``gamma`` and ``n_iter`` default
    per experiment: single_run uses 1 replicate and 30 steps; the PDE rate
    studies use 20 replicates, N in 100..3000 and gamma 5e-4 (DM1, scaled by
    ``coarse_n / 60``); diagonal_minimax uses 50 replicates, N = 16..4096 and
    gamma 1; variant_blowup uses 1000 replicates, 40 steps and gamma 0.01.
    """

    experiment: str = "single_run"
    filter: str = KALMAN
    filters: tuple = (KALMAN, THREEDVAR)
    coarse_n: int = 60
    fine_n: int = 120
    s: float = 1.0
    a: float = 1.0
    s_values: tuple | None = None
    data_model: str = DM2
    gamma: float | None = None
    noise_level: float = 0.05
    n_iter: int | None = None
    alpha_rule: str = "rate_tuned"
    alpha: float | None = None
    q: float | None = None
    N_list: tuple | None = None
    replicates: int | None = None
    beta: float = 1.0
    eps: float = 0.5
    p: float = 1.0
    n_modes: int | None = None
    domain_length: float | None = None
    seed: int = 0
    output_dir: str = "invfilter_output"

    def to_dict(self):
        out = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}

    def problem_spec(self):
        gamma = self.gamma
        return ProblemSpec(
            coarse_n=self.coarse_n, fine_n=self.fine_n, s=self.s, a=self.a,
            data_model=self.data_model, gamma=gamma,
            noise_level=None if gamma is not None else self.noise_level,
            n_iter=self.n_iter, alpha_rule=self.alpha_rule, alpha=self.alpha, q=self.q,
            seed=self.seed, domain_length=self.domain_length)


_INT = {"coarse_n", "fine_n", "n_iter", "replicates", "n_modes", "seed"}
_FLOAT = {"s", "a", "gamma", "noise_level", "alpha", "q", "beta", "eps", "p",
          "domain_length"}
_INT_LIST = {"N_list"}
_FLOAT_LIST = {"s_values"}
_STR_LIST = {"filters"}
_OPTIONAL = {f.name for f in fields(RunConfig) if f.default is None}


def _convert(key, raw):
    text = raw.strip()
    if text.lower() == "none":
        if key not in _OPTIONAL:
            raise ConfigError(f"{key} cannot be none")
        return None
    try:
        if key in _INT:
            return int(text)
        if key in _FLOAT:
            return float(text)
        if key in _INT_LIST:
            return tuple(int(x) for x in text.split(",") if x.strip())
        if key in _FLOAT_LIST:
            return tuple(float(x) for x in text.split(",") if x.strip())
        if key in _STR_LIST:
            return tuple(x.strip() for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return text


def parse_config(text):
    """Build a :class:`RunConfig` from ``key = value`` text (or a manifest's JSON)."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return from_mapping(payload.get("config", payload))
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = raw
    return from_mapping(values, raw=True)


def from_mapping(values, raw=False):
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    kw = {}
    for key, value in values.items():
        if raw:
            kw[key] = _convert(key, value)
        elif isinstance(value, list):
            kw[key] = tuple(value)
        else:
            kw[key] = value
    cfg = RunConfig(**kw)
    check_config(cfg)
    return cfg


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def check_config(cfg):
    """Raise :class:`ConfigError` on any invalid setting."""
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
    if cfg.filter not in FILTER_KINDS:
        raise ConfigError(f"filter must be one of {FILTER_KINDS}")
    bad = [f for f in cfg.filters if f not in (KALMAN, THREEDVAR)]
    if bad:
        raise ConfigError(f"rate studies support kalman and threedvar, got {bad}")
    if cfg.data_model not in (DM1, DM2):
        raise ConfigError(f"data_model must be DM1 or DM2, got {cfg.data_model!r}")
    if cfg.alpha_rule not in ALPHA_RULES:
        raise ConfigError(f"alpha_rule must be one of {ALPHA_RULES}")
    if cfg.q is not None and not 0 < cfg.q < 1:
        raise ConfigError(f"the geometric schedule needs 0 < q < 1, got q={cfg.q}")
    if cfg.filter == VARIANT and cfg.alpha_rule != "variant_geometric":
        raise ConfigError("the variant filter needs alpha_rule = variant_geometric")
    if cfg.replicates is not None and cfg.replicates < 1:
        raise ConfigError("replicates must be >= 1")
    if cfg.N_list is not None and (len(cfg.N_list) < 4 or min(cfg.N_list) < 1):
        raise ConfigError("N_list needs at least 4 positive entries")
    if cfg.n_modes is not None and cfg.n_modes < 1:
        raise ConfigError("n_modes must be >= 1")
    if cfg.fine_n != 2 * cfg.coarse_n:
        raise ConfigError("fine_n must be twice coarse_n")
    try:
        cfg.problem_spec()
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def validate(text):
    """Report on a configuration without running it; never raises."""
    report = {"valid": True, "errors": [], "warnings": [], "cost": None}
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        report.update(valid=False, errors=[str(exc)])
        return report
    s_values = cfg.s_values or ((cfg.s,) if cfg.experiment == "single_run" else (1, 2, 3))
    for s in s_values:
        if s > cfg.a + 2:
            report["warnings"].append(
                f"s={s} > a+2={cfg.a + 2}: outside the source-condition range, "
                "rates may degrade")
    report["cost"] = cost_estimate(cfg)
    report["config"] = cfg.to_dict()
    return report


def cost_estimate(cfg):
    """Rough count of per-mode filter updates (noisy plus noiseless runs)."""
    from . import runner
    plan = runner.resolve(cfg)
    modes = cfg.coarse_n ** 2 - 1
    if cfg.experiment in ("diagonal_minimax", "variant_blowup"):
        modes = plan["n_modes"]
    if cfg.experiment == "oracle_suite":
        return {"mode_updates": 0}
    steps = sum(plan["N_list"]) if "N_list" in plan else plan.get("n_iter", 0)
    sets = len(plan.get("s_values", (1,))) * len(plan.get("filters", (1,)))
    total = 2 * steps * sets * plan["replicates"] * modes
    return {"mode_updates": int(total)}
