"""
Seeded experiment sweeps and their CSV/JSON results.

A sweep varies one quantity (number of BS antennas, total RIS elements or
the minimum-power fraction gamma) over a list of values and repeats every
point for ``num_seeds`` channel realizations.  Seeds are
``scenario.seed + i`` for ``i < num_seeds``.
"""

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from .channels import ScenarioConfig, build_scenario, random_ris_phases
from .model import (
    PowerConstraints,
    RisPhases,
    TxBeamformer,
    check_feasibility,
    compose_channel,
    evaluate,
)
from .oracle import max_min_search
from .solver import (
    InfeasibleConstraintError,
    InfeasibleStartError,
    SolverConfig,
    initial_beamformer,
    initial_point,
    spmc_sca_admm,
)

log = logging.getLogger(__name__)

SWEEP_KINDS = ("antennas", "gamma", "ris_elements")
RIS_MODES = ("absent", "random_fixed", "optimized")
CSV_FIELDS = ("sweep_value", "seed", "total_power_w", "min_user_power_w", "feasible",
              "outer_iters", "wall_time_s")


@dataclass(frozen=True)
class SweepSpec:
    sweep_kind: str
    values: tuple
    ris_mode: str = "optimized"
    num_seeds: int = 20
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    bisect_tol: float = 1e-2

    def __post_init__(self):
        if self.sweep_kind not in SWEEP_KINDS:
            raise ValueError(f"sweep_kind must be one of {SWEEP_KINDS}")
        if self.ris_mode not in RIS_MODES:
            raise ValueError(f"ris_mode must be one of {RIS_MODES}")
        if self.num_seeds < 1:
            raise ValueError("num_seeds must be positive")
        if self.sweep_kind == "gamma":
            values = tuple(float(v) for v in self.values)
            if any(not 0 <= v <= 1 for v in values):
                raise ValueError("gamma values must lie in [0, 1]")
        else:
            values = tuple(int(v) for v in self.values)
            if any(v < (1 if self.sweep_kind == "antennas" else 0) for v in values):
                raise ValueError(f"invalid {self.sweep_kind} values {values}")
        object.__setattr__(self, "values", values)

    @property
    def seeds(self):
        return tuple(self.scenario.seed + i for i in range(self.num_seeds))

    def scenario_for(self, value, seed):
        cfg = self.scenario.replace(seed=seed)
        if self.sweep_kind == "antennas":
            cfg = cfg.replace(M=value)
        elif self.sweep_kind == "ris_elements":
            cfg = cfg.with_ris_total(value)
        return cfg

    def to_dict(self):
        return {
            "sweep": {"kind": self.sweep_kind, "values": list(self.values), "ris_mode": self.ris_mode,
                      "num_seeds": self.num_seeds, "bisect_tol": self.bisect_tol},
            "scenario": self.scenario.to_dict(),
            "solver": asdict(self.solver),
        }

    @classmethod
    def from_dict(cls, data):
        sweep = dict(data.get("sweep", {}))
        return cls(
            sweep_kind=sweep.pop("kind"),
            values=tuple(sweep.pop("values")),
            ris_mode=sweep.pop("ris_mode", "optimized"),
            num_seeds=sweep.pop("num_seeds", 20),
            bisect_tol=sweep.pop("bisect_tol", 1e-2),
            scenario=ScenarioConfig.from_dict(data.get("scenario", {})),
            solver=SolverConfig(**data.get("solver", {})),
        )


def load_sweep(path):
    with open(path) as fh:
        return SweepSpec.from_dict(yaml.safe_load(fh) or {})


def save_sweep(spec, path):
    with open(path, "w") as fh:
        yaml.safe_dump(spec.to_dict(), fh, sort_keys=False)


@dataclass
class ResultRow:
    """One solve of a sweep.

    The trailing fields keep the solution and the power floor it had to
    meet; they are not written to CSV/JSON.
    """

    sweep_value: float
    seed: int
    total_power_w: float
    min_user_power_w: float
    feasible: bool
    outer_iters: int
    wall_time_s: float
    alpha: np.ndarray = field(default=None, repr=False, compare=False)
    theta: np.ndarray = field(default=None, repr=False, compare=False)
    required_w: float = field(default=0.0, repr=False, compare=False)

    def record(self):
        return {name: getattr(self, name) for name in CSV_FIELDS}


def prepare(spec, value, seed):
    """Channels, starting point and RIS handling of one sweep point.

    The optimized mode screens starting points (the random RIS draw among
    them); the other modes, and every mode without RIS elements, start from
    the principal singular vector.
    """
    cfg = spec.scenario_for(value, seed)
    channels = build_scenario(cfg)
    if spec.ris_mode == "absent":
        channels, ris0 = channels.without_ris(), RisPhases.zeros(0)
    else:
        ris0 = RisPhases(random_ris_phases(cfg))
    if spec.ris_mode == "optimized" and channels.N:
        x0, ris0 = initial_point(channels, cfg.tx_power, theta0=ris0.theta, seed=seed)
    else:
        x0 = initial_beamformer(compose_channel(channels, ris0), cfg.tx_power)
    return channels, x0, ris0, spec.ris_mode == "optimized"


def _row(value, seed, result, required, seconds):
    return ResultRow(
        sweep_value=value,
        seed=seed,
        total_power_w=float(np.sum(result.per_user_power)),
        min_user_power_w=float(np.min(result.per_user_power)),
        feasible=result.all_feasible,
        outer_iters=int(result.outer_iters),
        wall_time_s=seconds,
        alpha=result.beamformer.alpha.copy(),
        theta=result.ris.theta.copy(),
        required_w=float(required),
    )


def _failed_row(value, seed, channels, x0, ris0, required, seconds):
    Q = evaluate(channels, x0, ris0)
    return ResultRow(value, seed, float(np.sum(Q)), float(np.min(Q)), False, 0, seconds,
                     x0.alpha.copy(), ris0.theta.copy(), float(required))


def _power_sweep_point(spec, value, seed):
    channels, x0, ris0, optimize_ris = prepare(spec, value, seed)
    t0 = time.perf_counter()
    res = spmc_sca_admm(channels, PowerConstraints.none(channels.K), x0, ris0, spec.solver,
                        optimize_ris=optimize_ris)
    return [_row(value, seed, res, 0.0, time.perf_counter() - t0)]


def _gamma_sweep_seed(spec, seed):
    channels, x0, ris0, optimize_ris = prepare(spec, None, seed)
    P = x0.P
    qmm, certificate = max_min_search(channels, spec.solver, spec.bisect_tol, P, x0=x0, ris0=ris0,
                                      optimize_ris=optimize_ris)
    rows = []
    for gamma in spec.values:
        required = gamma * qmm
        constraints = PowerConstraints(np.full(channels.K, required))
        t0 = time.perf_counter()
        try:
            res = spmc_sca_admm(channels, constraints, certificate.beamformer, certificate.ris,
                                spec.solver, optimize_ris=optimize_ris)
        except (InfeasibleStartError, InfeasibleConstraintError) as exc:
            log.warning("gamma %.3f seed %d: %s", gamma, seed, exc)
            rows.append(_failed_row(gamma, seed, channels, certificate.beamformer, certificate.ris,
                                    required, time.perf_counter() - t0))
            continue
        rows.append(_row(gamma, seed, res, required, time.perf_counter() - t0))
    return rows


def _job(args):
    spec, value, seed = args
    if spec.sweep_kind == "gamma":
        return _gamma_sweep_seed(spec, seed)
    return _power_sweep_point(spec, value, seed)


def run_sweep(spec, jobs=1):
    """Run every (value, seed) point; rows come back sorted by value then seed."""
    if spec.sweep_kind == "gamma":
        tasks = [(spec, None, seed) for seed in spec.seeds]
    else:
        tasks = [(spec, value, seed) for value in spec.values for seed in spec.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_job, tasks))
    else:
        chunks = [_job(t) for t in tasks]
    rows = [row for chunk in chunks for row in chunk]
    return sorted(rows, key=lambda r: (r.sweep_value, r.seed))


def audit_rows(spec, rows, tol=1e-9):
    """Re-evaluate each row's solution from scratch; True where it meets its floor."""
    out = []
    for row in rows:
        value = None if spec.sweep_kind == "gamma" else row.sweep_value
        channels, x0, _, _ = prepare(spec, value, row.seed)
        Q = evaluate(channels, TxBeamformer(row.alpha, x0.P), RisPhases(row.theta))
        constraints = PowerConstraints(np.full(channels.K, row.required_w))
        out.append(bool(np.all(check_feasibility(Q, constraints, tol))))
    return out


def _parse_number(text):
    try:
        return int(text)
    except ValueError:
        return float(text)


def _cell(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_results(rows, path, format="csv"):
    """Write rows as CSV or JSON; floats are written in round-trip form."""
    try:
        with open(path, "w", newline="") as fh:
            if format == "csv":
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(CSV_FIELDS)
                for row in rows:
                    writer.writerow([_cell(v) for v in row.record().values()])
            elif format == "json":
                json.dump([row.record() for row in rows], fh, indent=1)
                fh.write("\n")
            else:
                raise ValueError(f"unknown format {format!r}")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def read_results(path, format=None):
    """Parse a file written by ``emit_results``."""
    format = format or ("json" if str(path).endswith(".json") else "csv")
    try:
        with open(path, newline="") as fh:
            if format == "json":
                records = json.load(fh)
            else:
                records = [
                    {**rec, "feasible": rec["feasible"] == "true"}
                    | {k: _parse_number(rec[k]) for k in CSV_FIELDS if k != "feasible"}
                    for rec in csv.DictReader(fh)
                ]
    except OSError as exc:
        raise OSError(f"cannot read results from {path}: {exc}") from exc
    return [ResultRow(**{f.name: rec[f.name] for f in fields(ResultRow) if f.name in CSV_FIELDS})
            for rec in records]


def summarize(rows):
    """Mean total and minimum user power per sweep value."""
    out = {}
    for value in sorted({r.sweep_value for r in rows}):
        sel = [r for r in rows if r.sweep_value == value]
        out[value] = {
            "mean_total_power_w": float(np.mean([r.total_power_w for r in sel])),
            "mean_min_user_power_w": float(np.mean([r.min_user_power_w for r in sel])),
            "feasible_rate": float(np.mean([r.feasible for r in sel])),
            "runs": len(sel),
        }
    return out
