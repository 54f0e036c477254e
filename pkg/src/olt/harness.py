"""Run configuration, the run loop, bound verification and output files."""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import __version__
from .algorithms import AlgorithmConfig, PlayerState, StepReport, Variant, play_round
from .analysis import (
    InequalityCheck,
    LedgerError,
    MonteCarloCheck,
    ReferenceMeasure,
    RegretLedger,
    best_grid_reference,
    bound_rhs,
    bound_rhs_msoe,
    bound_rhs_shrinking,
    build_ledger,
    check_prefixes,
    gamma_lower_bound,
    monte_carlo_check,
    shrinking_mechanism,
)
from .domains import WholeSpace, domain_from_dict
from .environments import (
    TIME_CONVENTION,
    InteractionScenario,
    OracleView,
    Scenario,
    reveal,
    scenario_from_dict,
    sup_abs_bound,
)
from .measures import DiscreteMeasure, GridSet, w2_squared
from .oracles import brute_force_w2
from .rng import init_stream, replicate_seed
from .selection import ConstraintSet, min_norm_select, oracle_min_norm
from .tolerances import BOUND_TOL

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CSV_COLUMNS = (
    "t",
    "loss",
    "ref_loss",
    "regret_cum",
    "w2sq_to_ref",
    "sum_xi_sq_over_m",
    "slack_sum",
    "infeasible_count",
    "explore_scale_max",
    "bound_rhs_cum",
)
REFERENCE_POLICIES = ("best_grid_dirac", "uniform")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def build_grid(spec: dict) -> GridSet:
    """Grid from its config block.

    Kinds: ``disk_lattice`` (``per_axis`` points per axis on the bounding
    square of a ball, kept when inside the closed ball), ``lattice`` (box
    lattice with ``per_axis`` points per axis) and ``explicit``.
    """
    kind = spec.get("kind")
    if kind == "explicit":
        grid = GridSet(np.asarray(spec["points"], dtype=float))
    elif kind in ("disk_lattice", "lattice"):
        k = int(spec["per_axis"])
        if kind == "disk_lattice":
            center = np.asarray(spec.get("center", [0.0, 0.0]), dtype=float)
            radius = float(spec.get("radius", 1.0))
            lo, hi = center - radius, center + radius
        else:
            lo, hi = np.asarray(spec["lo"], dtype=float), np.asarray(spec["hi"], dtype=float)
        axes = [np.linspace(a, b, k) for a, b in zip(lo, hi)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
        if kind == "disk_lattice":
            pts = pts[np.sum((pts - center) ** 2, axis=1) <= radius**2 + 1e-12]
        grid = GridSet(pts)
    else:
        raise ConfigError(f"unknown grid kind {kind!r}")
    expect = spec.get("expect_n")
    if expect is not None and len(grid) != int(expect):
        raise ConfigError(f"grid has {len(grid)} points, expected {expect}")
    return grid


def initial_points(spec: dict, m: int, d: int, seed: int) -> np.ndarray:
    kind = spec.get("kind")
    rng = init_stream(seed)
    if kind == "explicit":
        pts = np.asarray(spec["points"], dtype=float).reshape(m, d)
    elif kind == "uniform_ball":
        center = np.asarray(spec.get("center", np.zeros(d)), dtype=float)
        radius = float(spec.get("radius", 1.0))
        g = rng.standard_normal((m, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        pts = center + radius * g * rng.random((m, 1)) ** (1.0 / d)
    elif kind == "uniform_box":
        lo = np.asarray(spec["lo"], dtype=float)
        hi = np.asarray(spec["hi"], dtype=float)
        pts = lo + (hi - lo) * rng.random((m, d))
    else:
        raise ConfigError(f"unknown initialization kind {kind!r}")
    return pts


@dataclass
class RunConfig:
    """Everything needed to reproduce a run; mirrors the config file."""

    name: str
    scenario: dict
    grid: dict
    m: int
    init: dict
    variant: str
    eta: float
    T: int
    seed: int = 0
    domain: dict = field(default_factory=lambda: {"kind": "whole"})
    references: list = field(default_factory=lambda: list(REFERENCE_POLICIES))
    replicates: int = 1
    bound_region: dict | None = None  # compact region for the constant B
    epsilon: float | None = None  # w-shape height floor, enables the escape probability
    track_w2: bool | None = None  # per-round transport terms; default: all but MSoE
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if int(self.schema_version) != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if int(self.T) < 1 or int(self.m) < 1 or not float(self.eta) > 0:
            raise ConfigError("need T >= 1, m >= 1 and eta > 0")
        if int(self.replicates) < 1:
            raise ConfigError("replicates must be at least 1")
        try:
            Variant(self.variant)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for ref in self.references:
            if ref not in REFERENCE_POLICIES and not isinstance(ref, dict):
                raise ConfigError(f"unknown reference policy {ref!r}")
        self.T, self.m, self.eta, self.seed = int(self.T), int(self.m), float(self.eta), int(self.seed)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        data.setdefault("schema_version", SCHEMA_VERSION)
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            data = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a key-value document")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "name": self.name,
            "scenario": self.scenario,
            "grid": self.grid,
            "m": self.m,
            "init": self.init,
            "variant": self.variant,
            "eta": self.eta,
            "T": self.T,
            "seed": self.seed,
            "domain": self.domain,
            "references": self.references,
            "replicates": self.replicates,
            "bound_region": self.bound_region,
            "epsilon": self.epsilon,
            "track_w2": self.track_w2,
        }

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def replace(self, **changes) -> "RunConfig":
        data = copy.deepcopy(self.to_dict())
        data.update(changes)
        return RunConfig.from_dict(data)


# ---------------------------------------------------------------------------
# run loop
# ---------------------------------------------------------------------------


@dataclass
class RunRecord:
    config: RunConfig
    replicate: int
    seed: int
    grid: GridSet
    states: list[PlayerState]
    views: list[OracleView]
    reports: list[StepReport]
    ledgers: dict[str, RegretLedger]
    metadata: dict
    wall_clock: float
    version: str = __version__
    checks: list[dict] = field(default_factory=list)

    @property
    def variant(self) -> Variant:
        return Variant(self.config.variant)


def _reference(policy, grid: GridSet, views: Sequence[OracleView]) -> tuple[str, ReferenceMeasure]:
    if policy == "best_grid_dirac":
        if views[0].is_interaction:
            # comparator loss of a grid Dirac is W_t(0) for every grid point
            totals = np.array([np.diag(v.w_grid) for v in views])
        else:
            totals = np.array([v.values_at_grid for v in views])
        return policy, best_grid_reference(totals)
    if policy == "uniform":
        return policy, ReferenceMeasure.uniform(len(grid))
    if isinstance(policy, dict):
        name = policy.get("name", "user")
        return name, ReferenceMeasure.from_points(grid, policy["points"], policy["weights"])
    raise ConfigError(f"unknown reference policy {policy!r}")


def run_metadata(config: RunConfig, scenario: Scenario) -> dict:
    domain = domain_from_dict(config.domain)
    meta = {"time_convention": TIME_CONVENTION}
    if not isinstance(domain, WholeSpace):
        meta["projection"] = f"every update, exploration included, is projected onto the {domain.kind} domain"
    if isinstance(scenario, InteractionScenario):
        meta["information_model"] = "kernel revealed on all pairwise differences within the decision points and the grid"
    if config.bound_region is not None:
        meta["bound_region"] = "constant B computed over the declared bound_region, not the whole domain"
    return meta


def run(config: RunConfig, replicate: int = 0, references: Sequence | None = None) -> RunRecord:
    """Play ``config.T`` rounds: reveal, update, and build the ledgers."""
    started = time.perf_counter()
    scenario = scenario_from_dict(config.scenario)
    grid = build_grid(config.grid)
    domain = domain_from_dict(config.domain)
    variant = Variant(config.variant)
    if isinstance(scenario, InteractionScenario) != (variant is Variant.INTERACTION):
        raise ConfigError("the interaction variant needs an interaction scenario and vice versa")
    seed = replicate_seed(config.seed, replicate)
    cfg = AlgorithmConfig(config.eta, variant, domain)
    state = PlayerState(initial_points(config.init, config.m, grid.dim, seed), 1)
    states, views, reports = [state], [], []
    for t in range(1, config.T + 1):
        view = reveal(scenario, t, state.points, grid)
        state, report = play_round(state, view, grid, cfg, seed)
        states.append(state)
        views.append(view)
        reports.append(report)
    track = config.track_w2 if config.track_w2 is not None else variant is not Variant.MSOE
    ledgers = {}
    for policy in references if references is not None else config.references:
        name, nu = _reference(policy, grid, views)
        ledgers[name] = build_ledger(states, views, reports, nu, grid, config.eta, track_w2=track)
    return RunRecord(
        config=config,
        replicate=replicate,
        seed=seed,
        grid=grid,
        states=states,
        views=views,
        reports=reports,
        ledgers=ledgers,
        metadata=run_metadata(config, scenario),
        wall_clock=time.perf_counter() - started,
    )


def run_ensemble(
    config: RunConfig,
    replicates: int | None = None,
    references: Sequence | None = None,
    workers: int = 1,
) -> list[RunRecord]:
    """All replicates of ``config``; each draws from its own seed, so order does not matter."""
    count = config.replicates if replicates is None else replicates
    if workers <= 1 or count <= 1:
        return [run(config, r, references) for r in range(count)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, [config] * count, range(count), [references] * count))


# ---------------------------------------------------------------------------
# bound verification
# ---------------------------------------------------------------------------


PATHWISE_BOUNDS = {
    Variant.MINIMAL_SELECTION: "convex",
    Variant.RELAXED: "slack",
    Variant.INTERACTION: "interaction",
}


@dataclass(frozen=True)
class BoundRow:
    bound: str
    reference: str
    lhs: float
    rhs: float
    tol: float
    passed: bool
    detail: str = ""

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    def to_dict(self) -> dict:
        return {
            "bound": self.bound,
            "reference": self.reference,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "tol": self.tol,
            "verdict": "pass" if self.passed else "fail",
            "detail": self.detail,
        }


def applicable_bounds(config: RunConfig, ensemble: bool) -> list[str]:
    variant = Variant(config.variant)
    if variant is Variant.MSOE:
        out = ["exploration"] if ensemble else []
        if ensemble and config.epsilon is not None:
            out.append("mechanism")
            if config.bound_region is not None:
                out.append("shrinking")
        return out
    out = [PATHWISE_BOUNDS[variant]]
    if variant is Variant.MINIMAL_SELECTION and domain_from_dict(config.domain).kind != "whole":
        out.append("projected")
    return out


def _pathwise_row(bound: str, name: str, ledger: RegretLedger, tol: float) -> BoundRow:
    check: InequalityCheck = check_prefixes(ledger.regret, bound_rhs(ledger), tol)
    return BoundRow(bound, name, check.lhs, check.rhs, tol, check.passed, "worst prefix")


def _mc_row(bound: str, name: str, lhs: np.ndarray, rhs: np.ndarray) -> BoundRow:
    """Monte-Carlo check at every prefix; the reported row is the tightest one."""
    checks: list[MonteCarloCheck] = [monte_carlo_check(lhs[:, k], rhs[:, k]) for k in range(lhs.shape[1])]
    worst = min(checks, key=lambda c: c.slack + c.z * c.stderr)
    detail = f"{worst.samples} paths, stderr {worst.stderr:.3g}, margin {worst.z:g} stderr"
    return BoundRow(bound, name, worst.mean_lhs, worst.mean_rhs, worst.z * worst.stderr, all(c.passed for c in checks), detail)


def _mechanism_row(name: str, ledgers: Sequence[RegretLedger], config: RunConfig) -> BoundRow:
    """Feasible sets never shrink, and the infeasible fraction decays at rate gamma."""
    gamma = gamma_lower_bound(config.epsilon, config.eta)
    counts = np.array([L.m - L.infeasible_count for L in ledgers])
    rep = shrinking_mechanism(counts, config.m, gamma)
    excess = rep.mean_fraction - rep.envelope
    k = int(np.argmax(excess))
    detail = f"{rep.monotone_paths}/{rep.paths} monotone paths, gamma={gamma:.6g}, worst round {k + 1}"
    return BoundRow("mechanism", name, float(rep.mean_fraction[k]), float(rep.envelope[k]), 0.0, rep.non_expansion_ok and rep.decay_ok, detail)


def verify_bounds(records: Sequence[RunRecord], bounds: Sequence[str] | None = None, tol: float = BOUND_TOL) -> list[BoundRow]:
    """One row per (bound, reference) for a single run or an ensemble of replicates.

    Pathwise bounds are checked on every record at every prefix (the row
    reports the worst record); expectation bounds need an ensemble.
    """
    records = list(records)
    if not records:
        raise LedgerError("empty ensemble")
    config = records[0].config
    ensemble = len(records) > 1
    allowed = applicable_bounds(config, ensemble)
    requested = list(bounds) if bounds is not None else allowed
    for b in requested:
        if b not in allowed:
            raise LedgerError(f"bound {b!r} does not apply to a {config.variant} run (applicable: {allowed})")
    rows = []
    for name in records[0].ledgers:
        ledgers = [r.ledgers[name] for r in records]
        for b in requested:
            if b in ("convex", "slack", "interaction", "projected"):
                per = [_pathwise_row(b, name, L, tol) for L in ledgers]
                worst = min(per, key=lambda row: row.slack)
                rows.append(BoundRow(b, name, worst.lhs, worst.rhs, tol, all(p.passed for p in per), f"{len(per)} path(s), worst prefix"))
            elif b == "exploration":
                lhs = np.array([L.regret for L in ledgers])
                rhs = np.array([bound_rhs_msoe(L) for L in ledgers])
                rows.append(_mc_row(b, name, lhs, rhs))
            elif b == "shrinking":
                scenario = scenario_from_dict(config.scenario)
                region = domain_from_dict(config.bound_region)
                B = sup_abs_bound(scenario, config.T, region)
                gamma = gamma_lower_bound(config.epsilon, config.eta)
                lhs = np.array([L.regret for L in ledgers])
                rhs = np.array([bound_rhs_shrinking(L, gamma, B) for L in ledgers])
                row = _mc_row(b, name, lhs, rhs)
                rows.append(BoundRow(row.bound, row.reference, row.lhs, row.rhs, row.tol, row.passed, row.detail + f", B={B:g}, gamma={gamma:.6g}"))
            elif b == "mechanism":
                rows.append(_mechanism_row(name, ledgers, config))
    return rows


# ---------------------------------------------------------------------------
# oracle suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleReport:
    qp_instances: int
    qp_agree: int
    w2_instances: int
    w2_agree: int
    digest: str
    failures: tuple = ()

    @property
    def passed(self) -> bool:
        return self.qp_agree == self.qp_instances and self.w2_agree == self.w2_instances


def random_qp_instance(rng: np.random.Generator, max_d: int = 3, max_n: int = 6) -> ConstraintSet:
    d = int(rng.integers(1, max_d + 1))
    n = int(rng.integers(1, max_n + 1))
    return ConstraintSet(rng.uniform(-1.0, 1.0, (n, d)), rng.uniform(-1.0, 1.0, n))


def oracle_suite(seed: int, count: int, w2_count: int | None = None, xi_tol: float = 1e-6, w2_tol: float = 1e-9) -> OracleReport:
    """Cross-check the QP solver and W2 against brute force on seeded random instances."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0x51])))
    w2_count = count // 2 if w2_count is None else w2_count
    h = hashlib.sha256()
    failures = []
    qp_ok = 0
    for k in range(count):
        c = random_qp_instance(rng)
        got, want = min_norm_select(c), oracle_min_norm(c)
        ok = got.feasible == want.feasible and (not got.feasible or np.linalg.norm(got.xi - want.xi) <= xi_tol)
        qp_ok += ok
        if not ok:
            failures.append(("qp", k, c.to_json()))
        h.update(f"qp{k}:{int(got.feasible)}:{np.round(got.xi, 9).tolist() if got.feasible else None};".encode())
    w2_ok = 0
    for k in range(w2_count):
        m = int(rng.integers(1, 7))
        d = int(rng.integers(1, 4))
        mu = DiscreteMeasure.uniform(rng.uniform(-1.0, 1.0, (m, d)))
        nu = DiscreteMeasure.uniform(rng.uniform(-1.0, 1.0, (m, d)))
        got, want = w2_squared(mu, nu), brute_force_w2(mu, nu)
        ok = abs(got - want) <= w2_tol
        w2_ok += ok
        if not ok:
            failures.append(("w2", k, got, want))
        h.update(f"w2{k}:{round(got, 9)};".encode())
    return OracleReport(count, qp_ok, w2_count, w2_ok, h.hexdigest(), tuple(failures))


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def ledger_csv(ledger: RegretLedger) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    regret = ledger.regret
    try:
        rhs = bound_rhs(ledger)
    except LedgerError:
        rhs = np.full(len(ledger), np.nan)
    for k in range(len(ledger)):
        writer.writerow(
            [
                k + 1,
                _fmt(ledger.loss[k]),
                _fmt(ledger.ref_loss[k]),
                _fmt(regret[k]),
                _fmt(ledger.w2sq[k]),
                _fmt(ledger.xi_sq_over_m[k]),
                _fmt(ledger.slack_sum[k]),
                int(ledger.infeasible_count[k]),
                _fmt(ledger.explore_scale_max[k]),
                _fmt(rhs[k]),
            ]
        )
    return buf.getvalue()


def snapshots(record: RunRecord) -> dict:
    """Point clouds per round for external plotting."""
    return {
        "grid": record.grid.points.tolist(),
        "rounds": [
            {
                "t": s.round,
                "points": s.points.tolist(),
                "feasible": None if k >= len(record.reports) else record.reports[k].feasible.tolist(),
                "xi": None if k >= len(record.reports) else record.reports[k].xi.tolist(),
            }
            for k, s in enumerate(record.states)
        ],
    }


def _ledger_dict(ledger: RegretLedger) -> dict:
    return {
        "eta": ledger.eta,
        "m": ledger.m,
        "variant": ledger.variant.value,
        "reference_weights": ledger.reference.weights.tolist(),
        "reference_provenance": ledger.reference.provenance,
        **{
            key: getattr(ledger, key).tolist()
            for key in (
                "loss",
                "ref_loss",
                "w2sq",
                "xi_sq_over_m",
                "slack_over_m",
                "slack_sum",
                "gap_infeasible_over_m",
                "infeasible_count",
                "explore_scale_max",
            )
        },
    }


def _ledger_from_dict(data: dict) -> RegretLedger:
    arrays = {
        key: np.asarray([np.nan if v is None else v for v in data[key]], dtype=float)
        for key in (
            "loss",
            "ref_loss",
            "w2sq",
            "xi_sq_over_m",
            "slack_over_m",
            "slack_sum",
            "gap_infeasible_over_m",
            "explore_scale_max",
        )
    }
    return RegretLedger(
        eta=float(data["eta"]),
        m=int(data["m"]),
        variant=Variant(data["variant"]),
        reference=ReferenceMeasure(np.asarray(data["reference_weights"]), data["reference_provenance"]),
        infeasible_count=np.asarray(data["infeasible_count"], dtype=int),
        **arrays,
    )


def _digest(report: StepReport) -> dict:
    return {
        "t": report.round,
        "feasible_set": report.feasible_set,
        "xi_sq_sum": float(np.sum(report.xi**2)),
        "explore_scale_max": float(np.max(report.scale, initial=0.0)),
        "slack_sum": float(np.sum(report.slack)),
    }


def write_record(record: RunRecord, out_dir: str | Path) -> Path:
    """Write CSV ledgers, snapshots and the JSON record of one replicate."""
    rep_dir = Path(out_dir) / f"rep_{record.replicate:04d}"
    rep_dir.mkdir(parents=True, exist_ok=True)
    for name, ledger in record.ledgers.items():
        (rep_dir / f"ledger_{name}.csv").write_text(ledger_csv(ledger))
    (rep_dir / "snapshots.json").write_text(json.dumps(snapshots(record)))
    payload = {
        "config": record.config.to_dict(),
        "replicate": record.replicate,
        "seed": record.seed,
        "metadata": record.metadata,
        "steps": [_digest(r) for r in record.reports],
        "ledgers": {name: _ledger_dict(L) for name, L in record.ledgers.items()},
        "checks": record.checks,
        "wall_clock": record.wall_clock,
        "version": record.version,
    }
    (rep_dir / "record.json").write_text(json.dumps(payload, allow_nan=True))
    return rep_dir


@dataclass
class LoadedRecord:
    """A record read back from disk: enough to re-run the bound checks."""

    config: RunConfig
    replicate: int
    ledgers: dict[str, RegretLedger]
    metadata: dict


def load_records(directory: str | Path) -> list[LoadedRecord]:
    paths = sorted(Path(directory).glob("**/record.json"))
    out = []
    for path in paths:
        data = json.loads(path.read_text())
        out.append(
            LoadedRecord(
                config=RunConfig.from_dict(data["config"]),
                replicate=int(data["replicate"]),
                ledgers={k: _ledger_from_dict(v) for k, v in data["ledgers"].items()},
                metadata=data.get("metadata", {}),
            )
        )
    return out


def group_records(records: Sequence[Any]) -> dict[str, list[Any]]:
    """Group replicates of the same configuration (by config name)."""
    groups: dict[str, list[Any]] = {}
    for rec in records:
        groups.setdefault(rec.config.name, []).append(rec)
    return groups
