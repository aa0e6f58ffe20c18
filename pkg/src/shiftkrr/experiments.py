"""Seeded Monte Carlo sweeps, rate-slope regression, and figure reproduction.

A sweep runs a grid of (sample size, shift level) cells, each with
independent replications whose seeds derive from the master seed and the
cell indices, so any row is reproducible in isolation and results do not
depend on worker scheduling.  Risks are evaluated exactly through
eigen-coordinates whenever the kernel family is orthonormal under the
target distribution, removing Monte Carlo noise from rate slopes.
Medians aggregate replications throughout (risk draws under shift are
heavy tailed).
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bounds import (
    _bound_totals,
    lambda_rule_finite_rank,
    lambda_rule_poly,
    reweighted_rate,
)
from .estimators import (
    FactorizationError,
    ProjectionError,
    fit_constrained_erm,
    fit_krr,
    fit_reweighted_krr,
    hilbert_norm_sq,
    l2q_error,
)
from .hard_instance import simulate_failure
from .seeding import derive_seed, rng_for
from .shifts import Dataset, ShiftPair, default_truncation, truncate_lr
from .spectrum import EigenKernel, EigenSequence, default_grid

FIGURE1_B_VALUES = (1.0, 5.0, 10.0, 15.0)
FIGURE2_N_VALUES = (2000, 8000, 16000)
FIGURE2_B_VALUES = (4.0, 16.0, 64.0, 256.0)


def format_cell(v) -> str:
    """Canonical CSV cell: floats at 17 significant digits."""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])


def write_json(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    payload = {"rows": [dict(zip(header, row)) for row in rows]}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


@dataclass
class ExperimentConfig:
    """Declarative description of one risk sweep."""

    pair: dict
    kernel: dict
    estimator: str = "krr"
    lambda_rule: dict = field(default_factory=lambda: {"rule": "fixed", "value": 0.1})
    n_list: Sequence[int] = (1000,)
    shift_grid: Sequence[float] = (1.0,)
    sigma_sq: float = 1.0
    hnorm_sq: float = 1.0
    fstar: dict = field(default_factory=lambda: {"kind": "phi", "j": 1})
    reps: int = 20
    n_mc: int = 10**5
    seed: int = 0
    risk: str = "auto"
    radius: float = 1.0
    weight_rule: str = "tau_n"
    truncation_scale: float = 1.0
    fit_mode: str = "primal"
    threads: int = 1

    def __post_init__(self):
        if not self.n_list or not self.shift_grid:
            raise ValueError("n_list and shift_grid must be nonempty")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.estimator not in ("krr", "reweighted", "erm"):
            raise ValueError(f"unknown estimator {self.estimator!r}")

    @classmethod
    def from_json(cls, obj) -> "ExperimentConfig":
        if isinstance(obj, str):
            obj = json.loads(obj)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class RiskRow:
    rep: int
    n: int
    b_or_v2: float
    estimator: str
    lam: float
    risk: float
    hnorm_sq: float
    seed: int
    status: str


RISK_HEADER = ("rep", "n", "B_or_V2", "estimator", "lambda", "risk",
               "hnorm_sq", "seed", "status")


def risk_rows_as_lists(rows: Sequence[RiskRow]) -> list[list]:
    return [[r.rep, r.n, r.b_or_v2, r.estimator, r.lam, r.risk, r.hnorm_sq,
             r.seed, r.status] for r in rows]


def fstar_coordinates(spec: dict, kernel: EigenKernel, hnorm_sq: float) -> np.ndarray:
    """Eigen-coordinates of the regression function with the target norm.

    ``{"kind": "phi", "j": k}`` puts all Hilbert mass on one eigenfunction;
    ``{"kind": "spread", "exponent": e}`` sets theta_j proportional to
    j^(-e) across the kernel rank, the profile that keeps the
    polynomial-decay risk exponent visible at desk scale.
    """
    kind = spec.get("kind", "phi")
    mu = kernel.mu
    theta = np.zeros(kernel.rank)
    if kind == "phi":
        j = int(spec.get("j", 1))
        if not 1 <= j <= kernel.rank or mu[j - 1] == 0:
            raise ValueError("fstar index outside the kernel rank")
        theta[j - 1] = math.sqrt(hnorm_sq * mu[j - 1])
        return theta
    if kind == "spread":
        e = float(spec.get("exponent", 1.25))
        raw = np.arange(1, kernel.rank + 1, dtype=float) ** -e
        live = mu > 0
        raw[~live] = 0.0
        scale = float(np.sum(raw[live] ** 2 / mu[live]))
        theta[live] = raw[live] * math.sqrt(hnorm_sq / scale)
        return theta
    raise ValueError(f"unknown fstar kind {kind!r}")


def _build_pair(template: dict, shift: Optional[float]) -> ShiftPair:
    spec = dict(template)
    if shift is not None:
        if spec["family"] == "hypercube":
            spec["B"] = shift
        elif spec["family"] == "gaussian_scale":
            spec["tau_sq"] = shift
    return ShiftPair.from_json(spec)


def _resolve_lambda(rule: dict, n: int, pair: ShiftPair, kernel: EigenKernel,
                    sigma_sq: float) -> float:
    name = rule.get("rule", "fixed")
    if name == "fixed":
        return float(rule["value"])
    if name == "finite_rank":
        D = int(np.count_nonzero(kernel.mu))
        return lambda_rule_finite_rank(sigma_sq, D, n)
    if name == "poly":
        alpha = float(rule.get("alpha", kernel.eigs.alpha or 1.0))
        if pair.declared_B is None:
            raise ValueError("poly lambda rule needs a B-bounded pair")
        return lambda_rule_poly(alpha, pair.declared_B, sigma_sq, n)
    if name == "reweighted":
        v_sq = pair.declared_V_sq if pair.declared_V_sq is not None else pair.declared_B
        c = float(rule.get("c", 1.0))
        if "alpha" in rule:
            return reweighted_rate("poly", v_sq, sigma_sq, n, c, alpha=float(rule["alpha"]))
        D = int(np.count_nonzero(kernel.mu))
        return reweighted_rate("finite_rank", v_sq, sigma_sq, n, c, D=D)
    raise ValueError(f"unknown lambda rule {name!r}")


def _exact_risk_available(pair: ShiftPair, kernel: EigenKernel) -> bool:
    return (pair.family, kernel.family) in {
        ("hypercube", "hypercube"),
        ("gaussian_scale", "hermite"),
    }


def run_risk_sweep(config: ExperimentConfig) -> list[RiskRow]:
    """Run the configured estimator over the (n, shift) grid with replications.

    Rows are emitted in canonical grid order.  Fit failures are recorded
    per row in the status column rather than aborting the sweep.
    """
    kernel = EigenKernel.from_json(config.kernel)
    theta_star = fstar_coordinates(config.fstar, kernel, config.hnorm_sq)

    def fstar_fn(x: np.ndarray) -> np.ndarray:
        return kernel.feature_matrix(x) @ theta_star

    def run_cell(cell: tuple[int, int]) -> list[RiskRow]:
        ni, bi = cell
        n = int(config.n_list[ni])
        shift = float(config.shift_grid[bi])
        pair = _build_pair(config.pair, shift)
        b_or_v2 = pair.declared_B if pair.declared_B is not None else pair.declared_V_sq
        lam = _resolve_lambda(config.lambda_rule, n, pair, kernel, config.sigma_sq)
        exact = config.risk == "exact" or (
            config.risk == "auto" and _exact_risk_available(pair, kernel)
        )
        rows = []
        for rep in range(config.reps):
            seed_r = derive_seed(config.seed, ni, bi, rep)
            rng = rng_for(seed_r, 1)
            xs = pair.sample_source(n, rng)
            ys = fstar_fn(xs) + rng.normal(0.0, math.sqrt(config.sigma_sq), size=n)
            data = Dataset(xs, ys)
            try:
                if config.estimator == "krr":
                    model = fit_krr(data, kernel, lam, mode=config.fit_mode)
                elif config.estimator == "reweighted":
                    rho = pair.lr(xs)
                    if config.weight_rule == "tau_n":
                        v_sq = pair.declared_V_sq if pair.declared_V_sq is not None else pair.declared_B
                        tau = config.truncation_scale * default_truncation(n, v_sq)
                        w = truncate_lr(rho, tau)
                    elif config.weight_rule == "B":
                        w = truncate_lr(rho, pair.declared_B)
                    elif config.weight_rule == "raw":
                        w = rho
                    else:
                        raise ValueError(f"unknown weight rule {config.weight_rule!r}")
                    model = fit_reweighted_krr(data.with_weights(w), kernel, lam,
                                               mode=config.fit_mode)
                else:
                    model = fit_constrained_erm(data, kernel, config.radius)
                if exact:
                    risk = l2q_error(model, theta_star, exact_mode=True)
                else:
                    risk = l2q_error(model, fstar_fn, pair, config.n_mc, seed=seed_r)
                rows.append(RiskRow(rep, n, b_or_v2, config.estimator, model.lam,
                                    risk, hilbert_norm_sq(model), seed_r, "ok"))
            except (FactorizationError, ProjectionError) as err:
                rows.append(RiskRow(rep, n, b_or_v2, config.estimator, lam,
                                    float("nan"), float("nan"), seed_r, str(err)))
        return rows

    cells = [(ni, bi) for ni in range(len(config.n_list))
             for bi in range(len(config.shift_grid))]
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            per_cell = list(pool.map(run_cell, cells))
    else:
        per_cell = [run_cell(c) for c in cells]
    return [row for cell_rows in per_cell for row in cell_rows]


@dataclass(frozen=True)
class RateSlope:
    slope: float
    stderr: float


def fit_rate_slope(
    rows: Sequence[RiskRow],
    group_by: Sequence[str] = ("estimator", "b_or_v2"),
) -> dict[tuple, RateSlope]:
    """OLS slope of log(median risk) against log(n) within each group.

    Requires at least 3 distinct sample sizes per group; raises
    ValueError("insufficient n grid") otherwise.
    """
    groups: dict[tuple, dict[int, list[float]]] = {}
    for r in rows:
        if r.status != "ok":
            continue
        key = tuple(getattr(r, g) for g in group_by)
        groups.setdefault(key, {}).setdefault(r.n, []).append(r.risk)
    out = {}
    for key, by_n in groups.items():
        if len(by_n) < 3:
            raise ValueError("insufficient n grid")
        ns = np.array(sorted(by_n))
        med = np.array([np.median(by_n[n]) for n in ns])
        x = np.log(ns.astype(float))
        y = np.log(med)
        xc = x - x.mean()
        sxx = float(np.sum(xc * xc))
        if sxx <= 0:
            raise ValueError("insufficient n grid")
        slope = float(np.sum(xc * (y - y.mean())) / sxx)
        resid = y - (y.mean() + slope * xc)
        dof = max(len(ns) - 2, 1)
        stderr = math.sqrt(float(np.sum(resid**2)) / dof / sxx)
        out[key] = RateSlope(slope, stderr)
    return out


FIGURE1_HEADER = ("B", "lambda", "bias_sq", "variance", "total", "is_argmin")


def figure1(
    out_path: Optional[str] = None,
    B_values: Sequence[float] = FIGURE1_B_VALUES,
    n: int = 8000,
    sigma_sq: float = 1.0,
    hnorm_sq: float = 1.0,
    lambda_grid: Optional[np.ndarray] = None,
    eigs: Optional[EigenSequence] = None,
) -> list[list]:
    """Bound trade-off curves versus lambda for several ratio bounds B.

    Default configuration: eigenvalues mu_j = (1/j)^2, sigma^2 = 1,
    n = 8000, B in {1, 5, 10, 15} on a 400-point log-spaced lambda grid.
    Exactly one row per B is flagged as the bound minimizer.
    """
    if eigs is None:
        eigs = EigenSequence.poly_decay(1.0, 1.0)
    grid = default_grid() if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    rows = []
    for B in B_values:
        reports = _bound_totals(eigs, float(B), n, sigma_sq, hnorm_sq, grid)
        k = int(np.argmin([r.total for r in reports]))
        for i, (lam, rep) in enumerate(zip(grid, reports)):
            rows.append([float(B), float(lam), rep.bias_sq, rep.variance,
                         rep.total, i == k])
    if out_path:
        write_csv(out_path, FIGURE1_HEADER, rows)
    return rows


FIGURE2_HEADER = ("n", "B", "median_hnorm_sq", "reps")


def figure2(
    n_list: Sequence[int] = FIGURE2_N_VALUES,
    B_grid: Sequence[float] = FIGURE2_B_VALUES,
    reps: int = 20,
    seed: int = 0,
    out_path: Optional[str] = None,
    sigma_sq: float = 1.0,
    D: Optional[int] = None,
) -> list[list]:
    """Median KRR Hilbert norm on the hard pair versus the ratio bound B.

    Each sample size contributes one curve over the part of the B grid it
    supports: cells with B > n^(2/3) fall outside the hard-pair validity
    range and are skipped, so smaller-n curves simply end earlier.
    """
    rows = []
    for ni, n in enumerate(n_list):
        for bi, B in enumerate(B_grid):
            if B > float(n) ** (2.0 / 3.0) + 1e-9:
                continue
            recs = simulate_failure(int(n), float(B), sigma_sq=sigma_sq, D=D,
                                    reps=reps, seed=derive_seed(seed, ni, bi))
            med = float(np.median([r.krr_hnorm_sq for r in recs]))
            rows.append([int(n), float(B), med, reps])
    if out_path:
        write_csv(out_path, FIGURE2_HEADER, rows)
    return rows


FAILURE_HEADER = ("rep", "n", "B", "erm_risk", "krr_risk", "krr_hnorm_sq", "theta1_erm")


def failure_rows_as_lists(records) -> list[list]:
    return [[r.rep, r.n, r.B, r.erm_risk, r.krr_risk, r.krr_hnorm_sq, r.theta1_erm]
            for r in records]
