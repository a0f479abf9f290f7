"""Dörfler marking and the SOLVE-ESTIMATE-MARK-REFINE loop."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import fem
from .estimate import Estimate, improved_indicator, residual_indicator, zz_indicator
from .mesh import Mesh, min_angle, refine
from .problems import ProblemSpec
from .recovery import recover, recovered_error

log = logging.getLogger(__name__)

COLUMNS = ("k", "Nv", "Ndof", "Ne", "eta", "term1", "term2", "osc", "err", "rec_err",
           "effectivity", "min_angle", "seconds")

ESTIMATORS = ("residual", "zz", "improved")


class NonConvergence(RuntimeError):
    pass


class InsufficientData(ValueError):
    pass


# ---------------------------------------------------------------- marking

def _bulk_prefix(values_sq, order, target):
    csum = np.cumsum(values_sq[order])
    # relative slack so that exactly-attained targets are not overshot by rounding
    n = int(np.searchsorted(csum, target * (1 - 1e-12), side="left")) + 1
    return min(n, len(order))


def mark_E(estimate: Estimate | np.ndarray, theta_E: float) -> np.ndarray:
    """Minimal set carrying ``theta_E**2`` of the total squared indicator.

    Elements are taken by decreasing indicator, ties by increasing index.
    """
    if not 0 < theta_E < 1:
        raise ValueError("theta_E must lie in (0, 1)")
    eta = estimate.eta_K if isinstance(estimate, Estimate) else np.asarray(estimate, dtype=float)
    e2 = eta ** 2
    total = e2.sum()
    if total <= 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((np.arange(len(e2)), -e2))
    n = _bulk_prefix(e2, order, theta_E ** 2 * total)
    marks = np.sort(order[:n])
    # minimality: dropping the smallest marked indicator breaks the bulk criterion
    assert e2[order[:n - 1]].sum() < theta_E ** 2 * total * (1 - 1e-12)
    return marks


def mark_R(marks, osc_K: np.ndarray, theta_0: float) -> np.ndarray:
    """Enlarge ``marks`` minimally so it carries ``theta_0**2`` of the oscillation."""
    if not 0 < theta_0 < 1:
        raise ValueError("theta_0 must lie in (0, 1)")
    marks = np.unique(np.asarray(marks, dtype=np.int64))
    o2 = np.asarray(osc_K, dtype=float) ** 2
    target = theta_0 ** 2 * o2.sum()
    have = o2[marks].sum()
    if have >= target * (1 - 1e-12):
        return marks
    rest = np.setdiff1d(np.arange(len(o2)), marks)
    order = rest[np.lexsort((rest, -o2[rest]))]
    csum = have + np.cumsum(o2[order])
    n = min(int(np.searchsorted(csum, target * (1 - 1e-12), side="left")) + 1, len(order))
    return np.union1d(marks, order[:n])


# ---------------------------------------------------------------- loop

@dataclass
class AdaptiveConfig:
    theta_E: float = 0.5
    theta_0: float = 0.5
    tolerance: float = 1e-2
    max_iterations: int = 60
    max_dofs: int = 30000
    refinement_depth: int = 3
    estimator: str = "improved"
    recovery_mode: str | None = None
    weighting: str = "area"
    tol_rel: float = 1e-10
    quad_degree: int = 5
    allow_fd: bool = False

    def __post_init__(self):
        if not (0 < self.theta_E < 1 and 0 < self.theta_0 < 1):
            raise ValueError("theta parameters must lie in (0, 1)")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.refinement_depth not in (1, 3):
            raise ValueError("refinement_depth must be 1 or 3")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.recovery_mode not in (None, "global", "per_subdomain"):
            raise ValueError("recovery_mode must be global or per_subdomain")


@dataclass
class ConvergenceRecord:
    rows: list = field(default_factory=list)

    def append(self, **row):
        self.rows.append({c: row.get(c, math.nan) for c in COLUMNS})

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path=None, include_time=True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) if (include_time or c != "seconds") else "" for c in COLUMNS])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


@dataclass
class AdaptiveResult:
    u_h: fem.FEFunction
    mesh: Mesh
    history: ConvergenceRecord
    estimate: Estimate
    reason: str

    @property
    def converged(self) -> bool:
        return self.reason == "tolerance"

    def __iter__(self):
        return iter((self.u_h, self.mesh, self.history))


def default_recovery_mode(problem: ProblemSpec) -> str:
    c = problem.coefficient
    if c.kind == "piecewise" and len(np.unique(problem.mesh.subdomain)) > 1:
        return "per_subdomain"
    return "global"


def estimate_on(problem: ProblemSpec, mesh: Mesh, u_h: fem.FEFunction, config: AdaptiveConfig):
    """Compute the configured estimator; returns ``(Estimate, RecoveredGradient)``."""
    quad = fem.quadrature(config.quad_degree)
    mode = config.recovery_mode or default_recovery_mode(problem)
    G = recover(mesh, u_h, config.weighting, mode)
    if config.estimator == "residual":
        est = residual_indicator(mesh, u_h, problem.coefficient, problem.f, quad)
    elif config.estimator == "zz":
        est = zz_indicator(mesh, u_h, G, problem.coefficient, problem.f, quad)
    else:
        est = improved_indicator(mesh, u_h, G, problem.coefficient, problem.f, quad, allow_fd=config.allow_fd)
    return est, G


def adaptive_solve(problem: ProblemSpec, config: AdaptiveConfig | None = None, callback=None,
                   mesh: Mesh | None = None) -> AdaptiveResult:
    """Run the adaptive loop until the estimator drops below the tolerance.

    Stops early on ``max_iterations`` or once the number of free DOFs reaches
    ``max_dofs``.  ``callback(k, mesh, u_h, estimate, G)`` is called after
    every ESTIMATE step.
    """
    config = config or AdaptiveConfig()
    quad = fem.quadrature(config.quad_degree)
    mesh = mesh if mesh is not None else problem.mesh
    history = ConvergenceRecord()
    k = 0
    while True:
        t0 = time.perf_counter()
        u_h = fem.solve(mesh, problem.coefficient, problem.f, problem.g, quad, config.tol_rel)
        est, G = estimate_on(problem, mesh, u_h, config)
        err = rec_err = eff = math.nan
        if problem.exact_grad is not None:
            err = fem.energy_error(u_h, problem.exact_grad, problem.coefficient, quad)[0]
            rec_err = recovered_error(G, problem.exact_grad, problem.coefficient, quad)[0]
            eff = est.eta / err if err >= 1e-12 else math.nan
        ndof = len(mesh.interior_vertices)
        history.append(k=k, Nv=mesh.n_vertices, Ndof=ndof, Ne=mesh.n_elements, eta=est.eta,
                       term1=est.term1, term2=est.term2, osc=est.osc, err=err, rec_err=rec_err,
                       effectivity=eff, min_angle=min_angle(mesh), seconds=time.perf_counter() - t0)
        log.info("k=%d Ndof=%d eta=%.4e err=%.4e", k, ndof, est.eta, err)
        if callback is not None:
            callback(k, mesh, u_h, est, G)
        if est.eta <= config.tolerance:
            reason = "tolerance"
            break
        if ndof >= config.max_dofs:
            reason = "max_dofs"
            break
        if k + 1 >= config.max_iterations:
            reason = "max_iterations"
            log.warning("no convergence after %d iterations (eta=%.3e)", k + 1, est.eta)
            break
        marks = mark_E(est, config.theta_E)
        marks = mark_R(marks, est.osc_K, config.theta_0)
        mesh = refine(mesh, marks, config.refinement_depth)
        k += 1
    return AdaptiveResult(u_h, mesh, history, est, reason)


# ---------------------------------------------------------------- rates

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    n: int

    def as_dict(self):
        return asdict(self)


def _linfit(x, y) -> RateFit:
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = np.sum((y - A @ [slope, icpt]) ** 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(icpt), float(r2), len(x))


def fit_rate(history: ConvergenceRecord, column: str, window: int | None = None, x_column: str = "Ndof") -> RateFit:
    """Least-squares slope of log(column) against log(Ndof) over the last ``window`` rows."""
    n = np.asarray(history.column(x_column))
    v = np.asarray(history.column(column))
    if window is not None:
        n, v = n[-window:], v[-window:]
    ok = np.isfinite(v) & (v > 0) & (n > 0)
    if ok.sum() < 3:
        raise InsufficientData(f"need at least 3 positive values of {column!r}")
    return _linfit(np.log(n[ok]), np.log(v[ok]))


def fit_geometric(values, start: int = 0) -> tuple[float, float]:
    """Fit ``values[k] ~ C delta^k`` for ``k >= start``; returns ``(delta, R^2)``."""
    v = np.asarray(values, dtype=float)
    k = np.arange(len(v))[start:]
    v = v[start:]
    ok = np.isfinite(v) & (v > 0)
    if ok.sum() < 3:
        raise InsufficientData("need at least 3 positive values")
    fit = _linfit(k[ok].astype(float), np.log(v[ok]))
    return float(np.exp(fit.slope)), fit.r2
