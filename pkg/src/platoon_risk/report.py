"""Result bundles: assembly, CSV/JSON serialization and plot data."""

from __future__ import annotations

import csv
import datetime as _dt
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InvalidParameterError, StabilityDomainError
from .graph import graph_eigenstructure
from .risk import RiskRow, cascade_table, single_table
from .scenario import Scenario
from .simulator import EmpiricalStatistics, estimate_statistics, simulate
from .spectral import (
    DistanceStatistics,
    PlatoonConfig,
    conditional_distribution,
    covariance_matrix,
    distance_covariance,
)
from .stability import StabilityReport, platoon_is_stable

log = logging.getLogger(__name__)

Z_LIMIT = 3.0


def fmt(x) -> str:
    """17 significant digits; ``inf`` for infinities."""
    if x is None:
        return ""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


@dataclass(frozen=True)
class ConditionalRow:
    j: int
    mu_tilde: float
    sigma_tilde_sq: float
    sigma_sq: float


@dataclass(frozen=True)
class ComparisonRow:
    i: int
    j: int
    analytic: float
    empirical: float
    se: float
    z: float


@dataclass
class ComparisonTable:
    rows: list[ComparisonRow]
    z_limit: float = Z_LIMIT

    @property
    def passed(self) -> bool:
        return all(abs(r.z) <= self.z_limit for r in self.rows)

    @property
    def max_abs_z(self) -> float:
        return max(abs(r.z) for r in self.rows)

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict}: max |z| = {self.max_abs_z:.3g} over {len(self.rows)} entries (limit {self.z_limit:g})"

    def to_dict(self) -> dict:
        return {"z_limit": self.z_limit, "passed": self.passed, "rows": [asdict(r) for r in self.rows]}

    @classmethod
    def from_dict(cls, data: dict) -> "ComparisonTable":
        return cls([ComparisonRow(**r) for r in data["rows"]], data["z_limit"])


def _matrix_eq(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(np.asarray(a), np.asarray(b))


@dataclass(eq=False)
class ResultBundle:
    provenance: dict
    stability: StabilityReport
    sigma: np.ndarray | None = None
    rho: np.ndarray | None = None
    conditional: dict[int, list[ConditionalRow]] = field(default_factory=dict)
    single: list[RiskRow] = field(default_factory=list)
    cascade: dict[int, list[RiskRow]] = field(default_factory=dict)
    comparison: ComparisonTable | None = None

    def __eq__(self, other) -> bool:
        if not isinstance(other, ResultBundle):
            return NotImplemented
        return (
            self.provenance == other.provenance
            and self.stability == other.stability
            and _matrix_eq(self.sigma, other.sigma)
            and _matrix_eq(self.rho, other.rho)
            and self.conditional == other.conditional
            and self.single == other.single
            and self.cascade == other.cascade
            and (self.comparison.rows if self.comparison else None)
            == (other.comparison.rows if other.comparison else None)
        )

    def to_dict(self) -> dict:
        return {
            "provenance": self.provenance,
            "stability": self.stability.to_dict(),
            "sigma": None if self.sigma is None else np.asarray(self.sigma).tolist(),
            "rho": None if self.rho is None else np.asarray(self.rho).tolist(),
            "conditional": {str(i): [asdict(r) for r in rows] for i, rows in self.conditional.items()},
            "single_risk": [r.to_dict() for r in self.single],
            "cascading_risk": {str(i): [r.to_dict() for r in rows] for i, rows in self.cascade.items()},
            "comparison": None if self.comparison is None else self.comparison.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ResultBundle":
        return cls(
            provenance=data["provenance"],
            stability=StabilityReport.from_dict(data["stability"]),
            sigma=None if data["sigma"] is None else np.array(data["sigma"], dtype=float),
            rho=None if data["rho"] is None else np.array(data["rho"], dtype=float),
            conditional={int(i): [ConditionalRow(**r) for r in rows] for i, rows in data["conditional"].items()},
            single=[RiskRow.from_dict(r) for r in data["single_risk"]],
            cascade={int(i): [RiskRow.from_dict(r) for r in rows] for i, rows in data["cascading_risk"].items()},
            comparison=None if data["comparison"] is None else ComparisonTable.from_dict(data["comparison"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ResultBundle":
        return cls.from_dict(json.loads(text))


def provenance(scenario: Scenario, seed: int | None = None) -> dict:
    return {
        "tool": "platoon-risk",
        "version": __version__,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "seed": seed,
        "graph": scenario.graph_label,
        "n": scenario.graph.n,
        "config": asdict(scenario.config),
        "collided": list(scenario.collided),
    }


def collided_pairs(scenario: Scenario) -> list[int]:
    if scenario.collided:
        return list(scenario.collided)
    return [scenario.graph.n // 2]


def conditional_table(stats: DistanceStatistics, cfg: PlatoonConfig, i: int, d_c: float = 0.0) -> list[ConditionalRow]:
    rows = []
    for j in range(1, stats.pairs + 1):
        if j == i:
            continue
        cd = conditional_distribution(stats, cfg, i, j, d_c)
        rows.append(ConditionalRow(j, cd.mu_tilde, cd.sigma_tilde_sq, stats.std(j) ** 2))
    return rows


def analyze(scenario: Scenario, allow_unstable: bool = False) -> ResultBundle:
    """Stability check, covariance, conditional laws and risk profiles."""
    eigs = graph_eigenstructure(scenario.graph)
    cfg = scenario.config
    report = platoon_is_stable(eigs, cfg.tau, cfg.beta)
    prov = provenance(scenario)
    if not report.stable:
        if allow_unstable:
            return ResultBundle(prov, report)
        raise StabilityDomainError(report.summary())
    stats = distance_covariance(eigs, cfg)
    bundle = ResultBundle(prov, report, sigma=np.array(stats.sigma), rho=stats.correlations)
    bundle.single = single_table(stats, cfg)
    if stats.pairs >= 2:
        for i in collided_pairs(scenario):
            bundle.conditional[i] = conditional_table(stats, cfg, i, scenario.d_c)
            bundle.cascade[i] = cascade_table(stats, cfg, i)
    return bundle


def compare_covariances(analytic: np.ndarray, empirical: EmpiricalStatistics, z_limit: float = Z_LIMIT) -> ComparisonTable:
    rows = []
    p = analytic.shape[0]
    for i in range(p):
        for j in range(i, p):
            a, e, se = float(analytic[i, j]), float(empirical.cov[i, j]), float(empirical.cov_se[i, j])
            diff = e - a
            if se > 0:
                z = diff / se
            else:
                z = 0.0 if abs(diff) <= 1e-12 * max(1.0, abs(a)) else math.inf
            rows.append(ComparisonRow(i + 1, j + 1, a, e, se, z))
    return ComparisonTable(rows, z_limit)


def compare_with_simulation(
    scenario: Scenario, seed: int | None = None, analytic_config: PlatoonConfig | None = None
):
    """Simulate the scenario and compare the empirical covariance to the analytic one.

    ``analytic_config`` replaces the configuration on the analytic side only
    (negative controls).  Returns ``(table, samples, empirical)``.
    """
    plan = scenario.plan(seed=seed)
    samples = simulate(plan)
    empirical = estimate_statistics(samples)
    cfg = analytic_config or scenario.config
    analytic = covariance_matrix(graph_eigenstructure(scenario.graph), cfg)
    return compare_covariances(analytic, empirical), samples, empirical


# ---------------------------------------------------------------- writers


def _write_rows(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_matrix_csv(path: Path, matrix: np.ndarray) -> Path:
    return _write_rows(path, [f"pair_{k}" for k in range(1, matrix.shape[1] + 1)],
                       ([fmt(x) for x in row] for row in matrix))


def _risk_rows(rows: list[RiskRow]):
    for r in rows:
        yield [r.j, r.risk.tag.value, fmt(r.risk.value), fmt(r.kappa0), fmt(r.kappainf), fmt(r.iota)]


RISK_HEADER = ["j", "tag", "value", "kappa0", "kappainf", "iota"]


def write_risk_csv(path: Path, rows: list[RiskRow]) -> Path:
    return _write_rows(path, RISK_HEADER, _risk_rows(rows))


def write_bundle(bundle: ResultBundle, out_dir: Path, formats=("csv", "json")) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        written.append(_write_rows(
            out_dir / "stability.csv", ["k", "lambda", "s1", "s2", "bound", "stable"],
            ([m.k, fmt(m.lam), fmt(m.s1), fmt(m.s2), fmt(m.bound), int(m.stable)] for m in bundle.stability.modes),
        ))
        if bundle.sigma is not None:
            written.append(write_matrix_csv(out_dir / "sigma.csv", bundle.sigma))
            written.append(write_matrix_csv(out_dir / "rho.csv", bundle.rho))
        if bundle.single:
            written.append(write_risk_csv(out_dir / "risk_single.csv", bundle.single))
        for i, rows in bundle.cascade.items():
            written.append(write_risk_csv(out_dir / f"risk_cascade_i{i}.csv", rows))
        for i, rows in bundle.conditional.items():
            written.append(_write_rows(
                out_dir / f"conditional_i{i}.csv", ["j", "mu_tilde", "sigma_tilde_sq", "sigma_sq"],
                ([r.j, fmt(r.mu_tilde), fmt(r.sigma_tilde_sq), fmt(r.sigma_sq)] for r in rows),
            ))
        if bundle.comparison is not None:
            written.append(_write_rows(
                out_dir / "comparison.csv", ["i", "j", "analytic", "empirical", "se", "z"],
                ([r.i, r.j, fmt(r.analytic), fmt(r.empirical), fmt(r.se), fmt(r.z)] for r in bundle.comparison.rows),
            ))
    if "json" in formats:
        path = out_dir / "bundle.json"
        path.write_text(bundle.to_json())
        written.append(path)
    return written


def _write_dat(path: Path, header: str, pairs) -> Path:
    with open(path, "w") as fh:
        fh.write(f"# {header}\n")
        for j, value in pairs:
            fh.write(f"{j} {fmt(value)}\n")
    return path


def _risk_token(row: RiskRow) -> float:
    return float(row.risk)


def emit_plot_data(bundle: ResultBundle, kind: str, out_dir: Path) -> list[Path]:
    """Two-column ``pair value`` files, one series per file."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if kind == "variance":
        if bundle.sigma is None:
            raise InvalidParameterError("bundle has no variance series")
        diag = np.diag(bundle.sigma)
        written.append(_write_dat(out_dir / "var_unconditional.dat", "j sigma_j^2",
                                  ((j + 1, v) for j, v in enumerate(diag))))
        for i, rows in bundle.conditional.items():
            written.append(_write_dat(out_dir / f"var_conditional_i{i}.dat", f"j sigma_tilde_j^2 given pair {i} collided",
                                      ((r.j, r.sigma_tilde_sq) for r in rows)))
    elif kind == "risk":
        if not bundle.single:
            raise InvalidParameterError("bundle has no risk series")
        written.append(_write_dat(out_dir / "risk_single.dat", "j single-collision risk",
                                  ((r.j, _risk_token(r)) for r in bundle.single)))
        for i, rows in bundle.cascade.items():
            written.append(_write_dat(out_dir / f"risk_cascade_i{i}.dat", f"j cascading risk given pair {i} collided",
                                      ((r.j, _risk_token(r)) for r in rows)))
    else:
        raise InvalidParameterError(f"unknown plot data kind {kind!r}")
    return written


def read_dat(path: Path) -> list[tuple[int, float]]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#") or not line.strip():
            continue
        j, value = line.split()
        out.append((int(j), float(value)))
    return out
