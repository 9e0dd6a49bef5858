"""Oscillation experiments and diagnostics for solved elliptic problems.

Runs controlled numerical experiments measuring how strongly a solution of
``-div(a grad u) = 0`` oscillates relative to the multiscale ellipticity
ratio of its coefficient field:

* :func:`harnack_experiment` — two-sided oscillation of a positive solution
  (sup/inf over centered subcubes) against a calibrated multiple of
  ``t**-1 * theta**0.5``;
* :func:`local_boundedness_experiment` — one-sided bound for sign-changing
  solutions (interior sup against the positive-part L2 norm) against a
  calibrated multiple of ``theta**(d/(4*sigma))``;
* :func:`reverse_holder_diagnostic`, :func:`log_caccioppoli_diagnostic`,
  :func:`sobolev_poincare_diagnostic` — scalar quotients whose finiteness
  and stability the test-suite tracks against frozen baselines;
* :func:`sharpness_sweep` — log-oscillation of exact anisotropic solutions
  as a function of the coefficient contrast, with a least-squares slope.

All experiments use the cell-centered discretization, whose discrete
maximum principle makes positivity of solutions a checkable guarantee
rather than an assumption.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .coarse import SweepResult, ellipticity_constants
from .fields import gen_constant
from .grid import (
    CoefficientField,
    GridSpec,
    TriadicCube,
    subcube_cell_slices,
)
from .norms import scale_discounted_averages
from .solver import (
    CubeFunction,
    SolveConfig,
    SolverError,
    SolveStats,
    energy,
    solve_dirichlet,
)

__all__ = [
    "SUBCUBE_FRACTIONS",
    "HARNACK_CALIBRATION",
    "LOCAL_BOUND_CALIBRATION",
    "MaxPrincipleViolation",
    "ExperimentRecord",
    "SharpnessReport",
    "harnack_experiment",
    "local_boundedness_experiment",
    "reverse_holder_diagnostic",
    "log_caccioppoli_diagnostic",
    "sobolev_poincare_diagnostic",
    "sharpness_boundary",
    "sharpness_sweep",
]

#: Centered subcube side fractions over which sup/inf are recorded.
SUBCUBE_FRACTIONS = (Fraction(1, 8), Fraction(1, 4), Fraction(1, 2))

# Calibration constants fitted once on the uniformly elliptic baseline
# suite (identity coefficient with affine data; diag(1, L) with exact
# exponential-times-cosine solutions, L up to 64) and frozen with ~25%
# headroom.  The baselines are pinned in the test-suite; regenerating
# them yields max ratio/threshold quotients of 0.0565 (two-sided) and
# 1.230 (one-sided).
HARNACK_CALIBRATION = 0.0706
LOCAL_BOUND_CALIBRATION = 1.54


class MaxPrincipleViolation(RuntimeError):
    """A solved field produced values outside the guaranteed sign range."""


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentRecord:
    """One solved experiment: oscillation statistics and pass/fail verdict.

    ``sup_by_fraction`` / ``inf_by_fraction`` hold extremes of the solution
    over the snapped centered subcubes keyed by the fraction as a string
    (e.g. ``"1/8"``).  ``harnack_log_ratio`` (two-sided runs) is
    ``log(sup/inf)`` on the smallest recorded subcube; ``lb_ratio``
    (one-sided runs) is ``sup over (1/2)-subcube / ||u_+||_L2``.  ``p_star``
    and the ``diagnostics`` moments are reported for inspection only and
    never asserted.
    """

    kind: str
    field_descriptor: str
    field_hash: str
    boundary_descriptor: str
    s: float
    t: float
    sigma: float
    theta: float
    theta_method: str
    sup_by_fraction: dict[str, float]
    inf_by_fraction: dict[str, float]
    u_plus_l2: float
    harnack_log_ratio: float | None
    lb_ratio: float | None
    threshold: float
    passed: bool
    p_star: float
    diagnostics: dict[str, float] = dataclass_field(default_factory=dict)
    solver: dict[str, object] = dataclass_field(default_factory=dict)

    def to_dict(self) -> dict:
        """JSON-ready dictionary (plain floats, string keys)."""
        return {
            "kind": self.kind,
            "field_descriptor": self.field_descriptor,
            "field_hash": self.field_hash,
            "boundary_descriptor": self.boundary_descriptor,
            "s": self.s,
            "t": self.t,
            "sigma": self.sigma,
            "theta": self.theta,
            "theta_method": self.theta_method,
            "sup_by_fraction": dict(self.sup_by_fraction),
            "inf_by_fraction": dict(self.inf_by_fraction),
            "u_plus_l2": self.u_plus_l2,
            "harnack_log_ratio": self.harnack_log_ratio,
            "lb_ratio": self.lb_ratio,
            "threshold": self.threshold,
            "passed": self.passed,
            "p_star": self.p_star,
            "diagnostics": dict(self.diagnostics),
            "solver": dict(self.solver),
        }


@dataclass(frozen=True)
class SharpnessReport:
    """Contrast sweep: per-contrast log-oscillations and their fitted line.

    ``slope``/``intercept`` are the least-squares fit of
    ``harnack_log_ratio`` against ``sqrt(contrast)``; they are ``None``
    when fewer than two contrasts solved successfully.  Failed contrasts
    are recorded in ``failures`` and the sweep is returned partially.
    """

    lambdas: tuple[float, ...]
    log_ratios: tuple[float, ...]
    slope: float | None
    intercept: float | None
    records: tuple[ExperimentRecord, ...]
    failures: tuple[dict, ...]

    def to_dict(self) -> dict:
        return {
            "lambdas": list(self.lambdas),
            "log_ratios": list(self.log_ratios),
            "slope": self.slope,
            "intercept": self.intercept,
            "records": [r.to_dict() for r in self.records],
            "failures": [dict(f) for f in self.failures],
        }


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------

def _full_domain(d: int) -> TriadicCube:
    return TriadicCube(0, (0,) * d)


def _require_cell_solver(config: SolveConfig) -> None:
    if config.discretization != "fd5":
        raise ValueError(
            "experiments require the cell-centered discretization "
            "(it guarantees a discrete maximum principle)"
        )


def _check_exponents(s: float, t: float) -> float:
    if not (0 < s < 1 and 0 < t < 1):
        raise ValueError("exponents must lie in (0, 1)")
    sigma = 1.0 - s - t
    if sigma <= 0:
        raise ValueError(f"exponents must satisfy s + t < 1, got s + t = {s + t}")
    return sigma


def _boundary_face_values(grid: GridSpec, boundary: Callable) -> np.ndarray:
    """Boundary data sampled at the face centers the solver itself uses."""
    m = grid.cells_per_side
    h = grid.h
    centers = -0.5 + (np.arange(m) + 0.5) * h
    samples = []
    for a in range(grid.d):
        for plane in (-0.5, 0.5):
            axes = [
                np.asarray([plane]) if b == a else centers for b in range(grid.d)
            ]
            mesh = np.meshgrid(*axes, indexing="ij")
            samples.append(np.asarray(boundary(*mesh), dtype=float).ravel())
    return np.concatenate(samples)


def _resolve_theta(
    field: CoefficientField,
    s: float,
    t: float,
    sweep_result: SweepResult | None,
    theta: float | None,
) -> tuple[float, str]:
    """Ellipticity ratio from an explicit value, a sweep, or upper surrogates.

    The surrogate route multiplies the scale-discounted average bounds for
    ``a`` and its inverse; it dominates the solved ratio (and agrees with it
    exactly on constant fields), so thresholds derived from it are looser,
    never tighter.
    """
    if theta is not None:
        return float(theta), "given"
    if sweep_result is not None:
        report = ellipticity_constants(sweep_result, s, t)
        return float(report.theta), "sweep"
    upper = scale_discounted_averages(field, s, "a").total
    lower = scale_discounted_averages(field, t, "a_inv").total
    return float(upper * lower), "surrogate"


def _region_values(u: CubeFunction, rho: Fraction) -> np.ndarray:
    """Cell values of a full-domain cell-mode function on a snapped subcube."""
    if u.cube.level != 0:
        raise ValueError("oscillation statistics require a full-domain solution")
    if u.mode != "cell":
        raise ValueError("oscillation statistics require a cell-mode solution")
    return u.data[subcube_cell_slices(u.grid, rho)]


def _extremes(u: CubeFunction) -> tuple[dict[str, float], dict[str, float]]:
    sups: dict[str, float] = {}
    infs: dict[str, float] = {}
    for frac in SUBCUBE_FRACTIONS:
        vals = _region_values(u, frac)
        sups[str(frac)] = float(vals.max())
        infs[str(frac)] = float(vals.min())
    return sups, infs


def _stats_dict(stats: SolveStats) -> dict[str, object]:
    return {
        "iterations": int(stats.iterations),
        "residual": float(stats.residual),
        "unknowns": int(stats.unknowns),
        "wall_time": float(stats.wall_time),
        "method": stats.method,
    }


def _u_plus_l2(u: CubeFunction) -> float:
    plus = np.maximum(u.data, 0.0)
    return float(np.sqrt(np.mean(plus * plus)))


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def harnack_experiment(
    field: CoefficientField,
    boundary: Callable,
    s: float,
    t: float,
    config: SolveConfig = SolveConfig(discretization="fd5"),
    sweep_result: SweepResult | None = None,
    theta: float | None = None,
    boundary_descriptor: str = "",
    calibration: float = HARNACK_CALIBRATION,
) -> ExperimentRecord:
    """Two-sided oscillation of the positive solution with given boundary data.

    Solves ``-div(a grad u) = 0`` with strictly positive boundary values,
    records sup/inf of ``u`` over the snapped centered subcubes of sides
    1/8, 1/4 and 1/2, and compares ``log(sup/inf)`` on the 1/8-subcube
    against ``calibration * t**-1 * theta**0.5``.

    Parameters
    ----------
    field : CoefficientField
        Diagonal coefficient field (cell-centered solver requirement).
    boundary : callable
        ``boundary(X1, ..., Xd)`` evaluated at boundary face centers in
        centered physical coordinates; must be strictly positive there.
    s, t : float
        Scale-discount exponents with ``s + t < 1``.
    config : SolveConfig, optional
        Must keep ``discretization="fd5"``.
    sweep_result : SweepResult, optional
        Coarse-graining sweep of ``field``; used for the solved ellipticity
        ratio when given.
    theta : float, optional
        Explicit ellipticity ratio (overrides ``sweep_result``).
    boundary_descriptor : str, optional
        Human-readable tag stored in the record.
    calibration : float, optional
        Pass threshold multiplier, default :data:`HARNACK_CALIBRATION`.

    Returns
    -------
    ExperimentRecord

    Raises
    ------
    ValueError
        If the sampled boundary data is not strictly positive or finite.
    MaxPrincipleViolation
        If the solved minimum over the full domain is not positive.
    """
    sigma = _check_exponents(s, t)
    _require_cell_solver(config)
    bvals = _boundary_face_values(field.grid, boundary)
    if not np.all(np.isfinite(bvals)):
        raise ValueError("boundary data must be finite at all face centers")
    if bvals.min() <= 0.0:
        raise ValueError(
            f"boundary data must be strictly positive; sampled minimum "
            f"{bvals.min():.6g}"
        )

    u, stats = solve_dirichlet(field, _full_domain(field.d), boundary, config)
    global_min = float(u.data.min())
    if global_min <= 0.0:
        raise MaxPrincipleViolation(
            f"solution minimum {global_min:.6g} is not positive although the "
            f"boundary minimum {bvals.min():.6g} is"
        )

    theta_val, theta_method = _resolve_theta(field, s, t, sweep_result, theta)
    sups, infs = _extremes(u)
    key = str(SUBCUBE_FRACTIONS[0])
    log_ratio = float(np.log(sups[key] / infs[key]))
    threshold = calibration * np.sqrt(theta_val) / t

    p_star = 0.5 * t / math.sqrt(theta_val)
    half = _region_values(u, Fraction(1, 2))
    w = np.log(half)
    w = w - w.mean()
    moment_plus = float(np.mean(np.exp(p_star * w)) ** (1.0 / p_star))
    moment_minus = float(np.mean(np.exp(-p_star * w)) ** (1.0 / p_star))

    return ExperimentRecord(
        kind="harnack",
        field_descriptor=field.descriptor,
        field_hash=field.content_hash,
        boundary_descriptor=boundary_descriptor,
        s=float(s),
        t=float(t),
        sigma=float(sigma),
        theta=theta_val,
        theta_method=theta_method,
        sup_by_fraction=sups,
        inf_by_fraction=infs,
        u_plus_l2=_u_plus_l2(u),
        harnack_log_ratio=log_ratio,
        lb_ratio=None,
        threshold=float(threshold),
        passed=bool(log_ratio <= threshold),
        p_star=float(p_star),
        diagnostics={
            "moment_plus": moment_plus,
            "moment_minus": moment_minus,
            "crossover": moment_plus * moment_minus,
        },
        solver=_stats_dict(stats),
    )


def local_boundedness_experiment(
    field: CoefficientField,
    boundary: Callable,
    s: float,
    t: float,
    config: SolveConfig = SolveConfig(discretization="fd5"),
    sweep_result: SweepResult | None = None,
    theta: float | None = None,
    boundary_descriptor: str = "",
    calibration: float = LOCAL_BOUND_CALIBRATION,
) -> ExperimentRecord:
    """One-sided interior bound for a possibly sign-changing solution.

    Solves the Dirichlet problem (no sign restriction on the data) and
    compares ``lb_ratio = sup over the (1/2)-subcube of u`` divided by the
    positive-part norm ``||u_+||_L2`` over the whole domain against
    ``calibration * theta**(d / (4*sigma))`` with ``sigma = 1 - s - t``.

    Parameters and errors are as in :func:`harnack_experiment`, minus the
    positivity requirement.  A solution with no positive part yields
    ``lb_ratio = 0``.
    """
    sigma = _check_exponents(s, t)
    _require_cell_solver(config)
    bvals = _boundary_face_values(field.grid, boundary)
    if not np.all(np.isfinite(bvals)):
        raise ValueError("boundary data must be finite at all face centers")

    u, stats = solve_dirichlet(field, _full_domain(field.d), boundary, config)
    theta_val, theta_method = _resolve_theta(field, s, t, sweep_result, theta)
    sups, infs = _extremes(u)
    u_plus = _u_plus_l2(u)
    sup_half = sups[str(Fraction(1, 2))]
    lb_ratio = 0.0 if u_plus == 0.0 else sup_half / u_plus
    threshold = calibration * theta_val ** (field.d / (4.0 * sigma))

    return ExperimentRecord(
        kind="local-bound",
        field_descriptor=field.descriptor,
        field_hash=field.content_hash,
        boundary_descriptor=boundary_descriptor,
        s=float(s),
        t=float(t),
        sigma=float(sigma),
        theta=theta_val,
        theta_method=theta_method,
        sup_by_fraction=sups,
        inf_by_fraction=infs,
        u_plus_l2=u_plus,
        harnack_log_ratio=None,
        lb_ratio=float(lb_ratio),
        threshold=float(threshold),
        passed=bool(lb_ratio <= threshold),
        p_star=float(0.5 * t / math.sqrt(theta_val)),
        diagnostics={},
        solver=_stats_dict(stats),
    )


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def _mean_lp(values: np.ndarray, p: float) -> float:
    return float(np.mean(np.abs(values) ** p) ** (1.0 / p))


def reverse_holder_diagnostic(
    field: CoefficientField,
    u: CubeFunction,
    kind: tuple[str, float],
    rho1: float,
    rho2: float,
    s: float,
    t: float,
    theta: float,
) -> float:
    """Reverse Hölder quotient of a convex transform of the solution.

    For ``Psi(u)`` given by ``kind`` — ``("power", p)`` maps ``u`` (positive
    on the outer subcube) to ``u**(p/2)`` with ``p`` outside ``{0, 1}``;
    ``("trunc", k)`` maps it to ``max(u - k, 0)`` — returns::

        ||Psi(u)||_{2*_t, rho1} /
            ((rho2 - rho1)**(-d/2)
             * (1 + (pf * theta**0.5 / (sigma * t * (rho2 - rho1)))**((s + sigma) / sigma))
             * ||Psi(u)||_{2, rho2})

    where norms are mean Lebesgue norms over the snapped centered subcubes,
    ``2*_t = 2d / (d - 2(1-t))`` and ``sigma = 1 - s - t``.  The prefactor
    ``pf = |p|/|p-1|`` for power transforms and ``1`` for truncations.
    A transform that vanishes on the outer subcube yields ``0.0``.

    Raises
    ------
    ValueError
        For subcube fractions outside ``1/2 <= rho1 < rho2 <= 1``,
        ``p in {0, 1}``, non-positive ``u`` under a power transform, or
        exponents outside the admissible range.
    """
    sigma = _check_exponents(s, t)
    if not (0.5 <= rho1 < rho2 <= 1.0):
        raise ValueError(
            f"subcube fractions must satisfy 1/2 <= rho1 < rho2 <= 1, "
            f"got rho1={rho1}, rho2={rho2}"
        )
    d = field.d
    denom = d - 2.0 * (1.0 - t)
    if denom <= 0:
        raise ValueError(
            f"integrability exponent requires d - 2(1-t) > 0, got {denom:.3g}"
        )
    two_star_t = 2.0 * d / denom

    transform, value = kind
    outer = _region_values(u, Fraction(rho2).limit_denominator(10**9))
    inner = _region_values(u, Fraction(rho1).limit_denominator(10**9))
    if transform == "power":
        p = float(value)
        if p in (0.0, 1.0):
            raise ValueError("power transform requires p outside {0, 1}")
        if outer.min() <= 0.0:
            raise ValueError(
                "power transform requires a strictly positive solution on "
                "the outer subcube"
            )
        psi_outer = outer ** (p / 2.0)
        psi_inner = inner ** (p / 2.0)
        prefactor = abs(p) / abs(p - 1.0)
    elif transform == "trunc":
        level = float(value)
        psi_outer = np.maximum(outer - level, 0.0)
        psi_inner = np.maximum(inner - level, 0.0)
        prefactor = 1.0
    else:
        raise ValueError(f"unknown transform kind {transform!r}")

    den_norm = _mean_lp(psi_outer, 2.0)
    if den_norm == 0.0:
        return 0.0
    num_norm = _mean_lp(psi_inner, two_star_t)
    gap = rho2 - rho1
    growth = (prefactor * math.sqrt(theta) / (sigma * t * gap)) ** ((s + sigma) / sigma)
    factor = gap ** (-d / 2.0) * (1.0 + growth)
    return num_norm / (factor * den_norm)


def log_caccioppoli_diagnostic(
    field: CoefficientField,
    u: CubeFunction,
    lambda_upper: float,
) -> float:
    """Energy of ``log u`` on the central half-cube over the upper constant.

    Returns ``||a^(1/2) grad log u||^2_{L2-mean((1/2)-subcube)} /
    lambda_upper`` for a full-domain cell-mode solution that is strictly
    positive on the half-cube.  Constant solutions give exactly ``0``; for
    the constant field ``diag(1, L)`` with ``u = exp(sqrt(L) x1)`` the
    quotient equals ``1`` when ``lambda_upper = L``.
    """
    if lambda_upper <= 0:
        raise ValueError("lambda_upper must be positive")
    region = subcube_cell_slices(u.grid, Fraction(1, 2))
    vals = _region_values(u, Fraction(1, 2))
    if vals.min() <= 0.0:
        raise ValueError(
            "log-energy requires a strictly positive solution on the half-cube"
        )
    with np.errstate(invalid="ignore", divide="ignore"):
        log_data = np.log(u.data)
    log_u = CubeFunction(u.grid, u.cube, log_data, u.mode)
    return energy(field, log_u, region=region) / float(lambda_upper)


def sobolev_poincare_diagnostic(
    field: CoefficientField,
    u: CubeFunction,
    s: float,
    lambda_lower: float,
) -> float:
    """Oscillation in the gained-integrability norm over the energy bound.

    Returns ``||u - mean(u)||_{L^(2*_s)-mean} / (s**-1 * lambda_lower**-0.5
    * ||a^(1/2) grad u||_{L2-mean})`` over the full domain, with
    ``2*_s = 2d / (d - 2(1-s))``.  A constant solution yields ``0``.
    """
    if not (0 < s < 1):
        raise ValueError("exponents must lie in (0, 1)")
    if lambda_lower <= 0:
        raise ValueError("lambda_lower must be positive")
    d = field.d
    denom = d - 2.0 * (1.0 - s)
    if denom <= 0:
        raise ValueError(
            f"integrability exponent requires d - 2(1-s) > 0, got {denom:.3g}"
        )
    two_star_s = 2.0 * d / denom
    mean = float(u.data.mean())
    oscillation = float(u.data.max() - u.data.min())
    if oscillation <= 1e-13 * max(1.0, abs(mean)):
        return 0.0
    centered = u.data - mean
    lhs = _mean_lp(centered, two_star_s)
    en = energy(field, u)
    if en <= 0.0:
        return 0.0
    return lhs * s * math.sqrt(float(lambda_lower)) / math.sqrt(en)


# ---------------------------------------------------------------------------
# Contrast sweep
# ---------------------------------------------------------------------------

def sharpness_boundary(lam: float) -> tuple[Callable, str]:
    """Boundary data of the exact solution ``exp(sqrt(L) x1) cos(x2)``.

    The function is harmonic for ``a = diag(1, L)`` and strictly positive on
    the closed unit cube (``|x2| <= 1/2 < pi/2``).
    """
    root = math.sqrt(lam)

    def boundary(x1, x2):
        return np.exp(root * x1) * np.cos(x2)

    return boundary, f"exp(sqrt({lam:g})*x1)*cos(x2)"


def sharpness_sweep(
    lambda_list: Sequence[float],
    s: float = 0.45,
    t: float = 0.45,
    N: int = 5,
    config: SolveConfig = SolveConfig(discretization="fd5"),
    calibration: float = HARNACK_CALIBRATION,
) -> SharpnessReport:
    """Log-oscillation versus contrast for exact anisotropic solutions.

    For each ``L`` in ``lambda_list`` runs :func:`harnack_experiment` on the
    constant field ``diag(1, L)`` (two dimensions, ``3**N`` cells per side)
    with the boundary trace of ``exp(sqrt(L) x1) cos(x2)``, then fits
    ``harnack_log_ratio`` against ``sqrt(L)`` by least squares.  The exact
    ellipticity ratio ``L`` is supplied directly, so no coarse-graining
    solves run.  Solver failures are recorded and the sweep returned
    partially; the fit requires at least two successful contrasts.
    """
    lams = [float(v) for v in lambda_list]
    if any(v < 1.0 for v in lams):
        raise ValueError("contrasts must be >= 1")
    grid = GridSpec(2, N)
    records: list[ExperimentRecord] = []
    failures: list[dict] = []
    for lam in lams:
        fld = gen_constant(grid, np.diag([1.0, lam]), descriptor=f"diag(1,{lam:g})")
        boundary, tag = sharpness_boundary(lam)
        try:
            rec = harnack_experiment(
                fld, boundary, s, t,
                config=config,
                theta=lam,
                boundary_descriptor=tag,
                calibration=calibration,
            )
        except (SolverError, MaxPrincipleViolation) as err:
            failures.append({"contrast": lam, "message": str(err)})
            continue
        records.append(rec)

    fitted = [(math.sqrt(r.theta), r.harnack_log_ratio) for r in records]
    if len(fitted) >= 2:
        xs = np.array([f[0] for f in fitted])
        ys = np.array([f[1] for f in fitted])
        slope, intercept = (float(v) for v in np.polyfit(xs, ys, 1))
    else:
        slope = intercept = None
    return SharpnessReport(
        lambdas=tuple(r.theta for r in records),
        log_ratios=tuple(r.harnack_log_ratio for r in records),
        slope=slope,
        intercept=intercept,
        records=tuple(records),
        failures=tuple(failures),
    )
