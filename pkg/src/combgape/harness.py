"""Batch experiments: JSON configs in, per-strategy result tables out."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .algorithm import DEFAULT_BUDGET, StrategyKind, run
from .analysis import audit_lemma2, hardness_profile
from .core import ActionClass, BanditInstance
from .environments import NoiseSpec, audit_event_E, best_action, derive_seed
from .oracles import GeneratedExperiment, bundled_cost_matrix, generate_knapsack_experiment, generate_transport_experiment, load_cost_matrix

CSV_COLUMNS = (
    "strategy",
    "n_trials",
    "mean_tau",
    "std_tau",
    "ratio_to_gapweighted",
    "misidentifications",
    "budget_exhausted",
)
UNRELIABLE_EXHAUSTION = 0.10

EXPERIMENTS = {"knapsack": "Knapsack", "transport": "Transport", "customactions": "CustomActions"}
STRATEGY_NAMES = {StrategyKind.GAP_WEIGHTED: "GapWeighted", StrategyKind.NAIVE: "NaiveLeastPulled"}
_STRATEGY_LOOKUP = {
    "gapweighted": StrategyKind.GAP_WEIGHTED,
    "gap_weighted": StrategyKind.GAP_WEIGHTED,
    "naiveleastpulled": StrategyKind.NAIVE,
    "naive": StrategyKind.NAIVE,
}
_NOISE_LOOKUP = {"gaussianunit": "gaussian_unit", "gaussian_unit": "gaussian_unit", "disabled": "disabled"}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message starts with the field path."""


def _sig6(x: float) -> float:
    return float(f"{x:.6g}") if math.isfinite(x) else x


@dataclass(frozen=True)
class AuditFlags:
    event_E: bool = False
    lemma2: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n_trials: int
    base_seed: int
    d: int | None = None
    m: int | None = None
    n: int | None = None
    delta: float = 0.05
    R: float = 1.0
    strategies: tuple[StrategyKind, ...] = (StrategyKind.GAP_WEIGHTED, StrategyKind.NAIVE)
    n_action_samples: int | None = None
    budget_cap: int = DEFAULT_BUDGET
    audit: AuditFlags = AuditFlags()
    cost_matrix_path: str | None = None
    output_path: str | None = None
    fixed_instance: bool = False
    noise: str | float = "gaussian_unit"
    actions: tuple[tuple[float, ...], ...] | None = None
    mu: tuple[float, ...] | None = None

    @property
    def samples(self) -> int:
        if self.n_action_samples is not None:
            return self.n_action_samples
        return 1000 if self.experiment == "Transport" else 100

    def noise_spec(self) -> NoiseSpec:
        if isinstance(self.noise, (int, float)):
            return NoiseSpec.scaled(float(self.noise))
        return NoiseSpec(self.noise)

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["strategies"] = [STRATEGY_NAMES[s] for s in self.strategies]
        if self.actions is not None:
            out["actions"] = [list(r) for r in self.actions]
        if self.mu is not None:
            out["mu"] = list(self.mu)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _require(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {msg}")


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def parse_config(doc: Any) -> ExperimentConfig:
    """Validate a decoded JSON document and fill in defaults."""
    _require(isinstance(doc, dict), "<root>", "expected a JSON object")
    known = set(ExperimentConfig.__dataclass_fields__)
    for key in doc:
        _require(key in known, key, "unknown field")
    for key in ("experiment", "n_trials", "base_seed"):
        _require(key in doc, key, "required field missing")
    kw: dict[str, Any] = dict(doc)

    exp = doc["experiment"]
    _require(isinstance(exp, str) and exp.lower() in EXPERIMENTS, "experiment", f"must be one of {sorted(EXPERIMENTS.values())}")
    kw["experiment"] = EXPERIMENTS[exp.lower()]

    _require(_is_int(doc["n_trials"]) and doc["n_trials"] >= 1, "n_trials", "must be an integer >= 1")
    _require(_is_int(doc["base_seed"]) and 0 <= doc["base_seed"] < 2**64, "base_seed", "must be a 64-bit unsigned integer")
    for key in ("d", "m", "n", "n_action_samples"):
        if doc.get(key) is not None:
            _require(_is_int(doc[key]) and doc[key] >= (2 if key != "n_action_samples" else 1), key, "must be a positive integer (>= 2 for sizes)")
    if "delta" in doc:
        _require(_is_num(doc["delta"]) and 0 < doc["delta"] < 1, "delta", "must lie in (0, 1)")
        kw["delta"] = float(doc["delta"])
    if "R" in doc:
        _require(_is_num(doc["R"]) and doc["R"] > 0, "R", "must be positive")
        kw["R"] = float(doc["R"])
    if "budget_cap" in doc:
        _require(_is_int(doc["budget_cap"]) and doc["budget_cap"] >= 2, "budget_cap", "must be an integer >= 2")
    if "strategies" in doc:
        strat = doc["strategies"]
        _require(isinstance(strat, list) and strat, "strategies", "must be a nonempty list")
        out = []
        for k, s in enumerate(strat):
            _require(isinstance(s, str) and s.lower() in _STRATEGY_LOOKUP, f"strategies[{k}]", "must be GapWeighted or NaiveLeastPulled")
            kind = _STRATEGY_LOOKUP[s.lower()]
            _require(kind not in out, f"strategies[{k}]", "duplicate strategy")
            out.append(kind)
        kw["strategies"] = tuple(out)
    if "audit" in doc:
        a = doc["audit"]
        _require(isinstance(a, dict), "audit", "must be an object")
        for key, val in a.items():
            _require(key in ("event_E", "lemma2"), f"audit.{key}", "unknown audit")
            _require(isinstance(val, bool), f"audit.{key}", "must be a boolean")
        kw["audit"] = AuditFlags(**a)
    for key in ("cost_matrix_path", "output_path"):
        if doc.get(key) is not None:
            _require(isinstance(doc[key], str), key, "must be a string")
    if "fixed_instance" in doc:
        _require(isinstance(doc["fixed_instance"], bool), "fixed_instance", "must be a boolean")
    if "noise" in doc:
        nz = doc["noise"]
        if _is_num(nz):
            _require(nz > 0, "noise", "sigma must be positive")
            kw["noise"] = float(nz)
        else:
            _require(isinstance(nz, str) and nz.lower() in _NOISE_LOOKUP, "noise", "must be GaussianUnit, Disabled or a positive sigma")
            kw["noise"] = _NOISE_LOOKUP[nz.lower()]

    if kw["experiment"] == "Knapsack":
        _require(doc.get("d") is not None, "d", "required for Knapsack")
    if kw["experiment"] == "CustomActions":
        acts, mu = doc.get("actions"), doc.get("mu")
        _require(isinstance(acts, list) and acts and all(isinstance(r, list) for r in acts), "actions", "required list of rows for CustomActions")
        for k, row in enumerate(acts):
            _require(all(_is_num(x) for x in row), f"actions[{k}]", "entries must be numbers")
        _require(isinstance(mu, list) and all(_is_num(x) for x in mu), "mu", "required list of numbers for CustomActions")
        _require(all(len(r) == len(mu) for r in acts), "actions", "every row must have len(mu) entries")
        try:
            ActionClass(np.array(acts, dtype=float))
        except ValueError as exc:
            raise ConfigError(f"actions: {exc}") from None
        kw["actions"] = tuple(tuple(float(x) for x in r) for r in acts)
        kw["mu"] = tuple(float(x) for x in mu)
    else:
        for key in ("actions", "mu"):
            _require(doc.get(key) is None, key, "only valid for CustomActions")
    return ExperimentConfig(**kw)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"<file>: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"<root>: malformed JSON in {path}: {exc}") from exc
    return parse_config(doc)


# ---------------------------------------------------------------------------
# instances and trials


def _cost_matrix(config: ExperimentConfig) -> np.ndarray:
    gamma = load_cost_matrix(config.cost_matrix_path) if config.cost_matrix_path else bundled_cost_matrix()
    m = config.m or gamma.shape[0]
    n = config.n or gamma.shape[1]
    if m > gamma.shape[0] or n > gamma.shape[1]:
        raise ConfigError(f"m, n: ({m}, {n}) exceeds the {gamma.shape} cost matrix")
    return gamma[:m, :n]


def make_instance(config: ExperimentConfig, trial: int = 0) -> GeneratedExperiment:
    """The experiment instance for ``trial`` (shared by all trials if fixed)."""
    seed = derive_seed(config.base_seed, 0) if config.fixed_instance else derive_seed(config.base_seed, 1, trial)
    rng = np.random.default_rng(seed)
    if config.experiment == "Knapsack":
        return generate_knapsack_experiment(config.d, rng, n_samples=config.samples)
    if config.experiment == "Transport":
        return generate_transport_experiment(_cost_matrix(config), rng, n_samples=config.samples)
    actions = ActionClass(np.array(config.actions))
    return GeneratedExperiment(None, np.array(config.mu), actions, np.empty((0, actions.d)), 0, {"kind": "custom"})


def instance_fingerprint(gen: GeneratedExperiment) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(gen.actions.actions).tobytes())
    h.update(np.ascontiguousarray(gen.mu).tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class TrialResult:
    trial: int
    strategy: StrategyKind
    tau: int
    a_out: int
    a_star: int
    exhausted: bool
    fingerprint: str
    event_E_held: bool | None = None
    lemma2_violations: int | None = None
    lemma2_violations_under_E: int | None = None

    @property
    def correct(self) -> bool:
        return self.a_out == self.a_star


def run_trial(config: ExperimentConfig, trial: int, gen: GeneratedExperiment | None = None) -> list[TrialResult]:
    """All strategies on one trial; strategies share the reward seed."""
    if gen is None:
        gen = make_instance(config, trial)
    a_star = best_action(gen.actions, gen.mu)
    fp = instance_fingerprint(gen)
    inst = BanditInstance(gen.mu, config.R, config.noise_spec(), derive_seed(config.base_seed, 2, trial))
    need_full = config.audit.lemma2
    profile = hardness_profile(gen.actions, gen.mu) if config.audit.lemma2 else None
    out = []
    for strategy in config.strategies:
        rec = run(inst, gen.actions, config.delta, strategy, config.budget_cap, full_trace=need_full)
        e_held = viol = viol_e = None
        if config.audit.event_E or config.audit.lemma2:
            e_held = audit_event_E(rec.snapshots, gen.actions, gen.mu, config.delta, config.R).event_E_held
        if config.audit.lemma2:
            found = audit_lemma2(rec, profile, config.R, gen.actions.K, config.delta)
            viol = len(found)
            viol_e = 0
            if found:
                # a flagged pull contradicts the threshold only if the event held at that round
                snaps = rec.snapshots_at([v.t for v in found])
                for snap in snaps:
                    if audit_event_E([snap], gen.actions, gen.mu, config.delta, config.R).event_E_held:
                        viol_e += 1
                    else:
                        e_held = False
        out.append(
            TrialResult(trial, strategy, rec.tau, rec.a_out, a_star, not rec.stopped, fp, e_held, viol, viol_e)
        )
    return out


def _trial_task(args) -> list[TrialResult]:
    config, trial = args
    return run_trial(config, trial)


def default_workers() -> int:
    env = os.environ.get("COMBGAPE_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"COMBGAPE_WORKERS: not an integer: {env!r}") from None
        if n < 1:
            raise ConfigError("COMBGAPE_WORKERS: must be >= 1")
        return n
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class StrategyRow:
    strategy: str
    n_trials: int
    mean_tau: float
    std_tau: float
    ratio_to_gapweighted: float
    misidentifications: int
    budget_exhausted: int


@dataclass
class ResultTable:
    rows: list[StrategyRow]
    metadata: dict[str, Any]
    trials: list[TrialResult] = field(default_factory=list, compare=False)

    def row(self, strategy: StrategyKind | str) -> StrategyRow:
        name = STRATEGY_NAMES[strategy] if isinstance(strategy, StrategyKind) else strategy
        for r in self.rows:
            if r.strategy == name:
                return r
        raise KeyError(name)

    def taus(self, strategy: StrategyKind) -> list[int]:
        return [t.tau for t in self.trials if t.strategy is strategy and not t.exhausted]


def aggregate(config: ExperimentConfig, trials: list[TrialResult]) -> ResultTable:
    means: dict[StrategyKind, float] = {}
    stats = {}
    for s in config.strategies:
        mine = [t for t in trials if t.strategy is s]
        used = [t for t in mine if not t.exhausted]
        taus = [float(t.tau) for t in used]
        mean = statistics.fmean(taus) if taus else math.nan
        std = statistics.stdev(taus) if len(taus) >= 2 else math.nan
        means[s] = mean
        stats[s] = (mine, used, mean, std)
    base = means.get(StrategyKind.GAP_WEIGHTED, math.nan)
    rows = []
    unreliable = []
    audit_summary = {}
    for s in config.strategies:
        mine, used, mean, std = stats[s]
        ratio = 1.0 if s is StrategyKind.GAP_WEIGHTED else mean / base
        exhausted = len(mine) - len(used)
        rows.append(
            StrategyRow(
                STRATEGY_NAMES[s],
                len(mine),
                _sig6(mean),
                _sig6(std),
                _sig6(ratio),
                sum(1 for t in used if not t.correct),
                exhausted,
            )
        )
        if exhausted > UNRELIABLE_EXHAUSTION * len(mine):
            unreliable.append(STRATEGY_NAMES[s])
        if config.audit.event_E or config.audit.lemma2:
            summary = {"event_E_failures": sum(1 for t in mine if t.event_E_held is False)}
            if config.audit.lemma2:
                summary["runs_with_lemma2_flags"] = sum(1 for t in mine if t.lemma2_violations)
                summary["lemma2_violations_under_E"] = sum(t.lemma2_violations_under_E or 0 for t in mine)
            audit_summary[STRATEGY_NAMES[s]] = summary
    fps = sorted({t.fingerprint for t in trials})
    h = hashlib.sha256("".join(t.fingerprint for t in sorted(trials, key=lambda t: t.trial)).encode())
    metadata = {
        "config": config.to_dict(),
        "instance_fingerprint": fps[0] if len(fps) == 1 else h.hexdigest()[:16],
        "distinct_instances": len(fps),
        "software_version": __version__,
        "unreliable_rows": unreliable,
    }
    if audit_summary:
        metadata["audits"] = audit_summary
    return ResultTable(rows, metadata, trials)


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> ResultTable:
    """Run every trial and aggregate; output is independent of ``workers``."""
    workers = default_workers() if workers is None else workers
    trials_idx = range(config.n_trials)
    if config.fixed_instance:
        gen = make_instance(config)
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                nested = list(pool.map(_fixed_task, [(config, k, gen) for k in trials_idx]))
        else:
            nested = [run_trial(config, k, gen) for k in trials_idx]
    else:
        tasks = [(config, k) for k in trials_idx]
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                nested = list(pool.map(_trial_task, tasks))
        else:
            nested = [_trial_task(t) for t in tasks]
    results = sorted((r for group in nested for r in group), key=lambda r: (r.trial, config.strategies.index(r.strategy)))
    return aggregate(config, results)


def _fixed_task(args) -> list[TrialResult]:
    config, trial, gen = args
    return run_trial(config, trial, gen)


# ---------------------------------------------------------------------------
# output


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def results_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in table.rows:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def _json_num(x):
    if isinstance(x, float):
        return _sig6(x) if math.isfinite(x) else None
    return x


def results_json(table: ResultTable) -> str:
    doc = {
        "rows": [{c: _json_num(getattr(r, c)) for c in CSV_COLUMNS} for r in table.rows],
        "metadata": table.metadata,
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def table_from_json(text: str) -> ResultTable:
    doc = json.loads(text)
    rows = []
    for r in doc["rows"]:
        vals = {c: (math.nan if r[c] is None else r[c]) for c in CSV_COLUMNS}
        for c in ("mean_tau", "std_tau", "ratio_to_gapweighted"):
            vals[c] = float(vals[c])
        rows.append(StrategyRow(**vals))
    return ResultTable(rows, doc["metadata"])


def trials_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "strategy", "tau", "a_out", "a_star", "budget_exhausted", "instance"])
    for t in table.trials:
        w.writerow([t.trial, STRATEGY_NAMES[t.strategy], t.tau, t.a_out, t.a_star, int(t.exhausted), t.fingerprint])
    return buf.getvalue()


def emit_results(table: ResultTable, format: str, path: str | Path) -> None:
    """Write ``table`` as CSV or JSON to ``path``."""
    fmt = format.lower()
    if fmt == "csv":
        text = results_csv(table)
    elif fmt == "json":
        text = results_json(table)
    else:
        raise ValueError(f"unknown format {format!r}; expected CSV or JSON")
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
