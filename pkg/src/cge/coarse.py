"""Cube-wise coarse-grained coefficient pairs and multiscale ellipticity.

For each cube ``Q`` two effective symmetric matrices are computed from
pure-Neumann variational problems:

* ``astar`` (subadditive from below): the gradient-forcing problems yield the
  quadratic form ``q . astar^{-1} q`` directly as their value Gram matrix;
* ``amax`` (superadditive envelope over the full trial space): the
  flux-forcing problem values.

Together with the plain arithmetic averages of the field and of its cellwise
inverse they satisfy the ordering ``inv_avg_inv <= astar <= amax <= avg`` (as
quadratic forms), which the audit verifies wholesale.

Scale-weighted ellipticity constants aggregate per-scale maxima of these
matrices over the triadic hierarchy with geometric weights ``3**(s*k)``; all
scales below the grid resolution contribute an exact closed-form tail because
sub-cell cubes see a constant field.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import (
    CoefficientField,
    GridSpec,
    TriadicCube,
    sym_component_count,
    sym_eig_bounds,
    sym_inv,
    sym_norm,
    sym_pack,
    sym_unpack,
)
from .solver import (
    SolveConfig,
    SolveStats,
    SolverError,
    batched_neumann_functionals,
    neumann_functionals,
)

__all__ = [
    "CoarseGrainPair",
    "SweepResult",
    "EllipticityReport",
    "AuditReport",
    "coarse_grain_cube",
    "sweep",
    "ellipticity_constants",
    "audit",
    "DEFAULT_S_GRID",
]

#: Five-point exponent grid used by the audit's monotonicity checks.
DEFAULT_S_GRID = (0.15, 0.3, 0.5, 0.7, 0.9)


@dataclass
class CoarseGrainPair:
    """Effective matrices of one cube (full symmetric (d, d) arrays)."""

    cube: TriadicCube
    astar: np.ndarray
    amax: np.ndarray
    avg: np.ndarray
    inv_avg_inv: np.ndarray
    astar_inv: np.ndarray
    stats: SolveStats | None = None

    def chain_slack(self) -> float:
        """Worst relative violation of the matrix ordering chain (>= 0)."""
        worst = 0.0
        seq = [self.inv_avg_inv, self.astar, self.amax, self.avg]
        for lo, hi in zip(seq[:-1], seq[1:]):
            scale = max(np.linalg.norm(hi, 2), 1e-300)
            w = np.linalg.eigvalsh(hi - lo)[0]
            worst = max(worst, -w / scale)
        return worst


def _pair_matrices_from_g(g: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """(astar, amax) from the 2d x 2d cross-functional value matrix."""
    astar_inv = 0.5 * (g[:d, :d] + g[:d, :d].T)
    amax = 0.5 * (g[d:, d:] + g[d:, d:].T)
    return astar_inv, amax


def _cube_averages(field: CoefficientField, cube: TriadicCube) -> tuple[np.ndarray, np.ndarray]:
    sl = cube.cell_slices(field.grid)
    ncomp = field.data.shape[-1]
    avg = field.data[sl].reshape(-1, ncomp).mean(axis=0)
    inv_avg = field.inv_data[sl].reshape(-1, ncomp).mean(axis=0)
    return avg, sym_inv(inv_avg, field.d)


def coarse_grain_cube(
    field: CoefficientField, cube: TriadicCube, config: SolveConfig = SolveConfig()
) -> CoarseGrainPair:
    """Compute one cube's coarse-grained pair (plus reference averages).

    Single-cell cubes need no solve: every matrix equals the cell value.
    """
    d = field.d
    avg_packed, inv_avg_inv_packed = _cube_averages(field, cube)
    avg = sym_unpack(avg_packed, d)
    inv_avg_inv = sym_unpack(inv_avg_inv_packed, d)
    if cube.level == -field.grid.N:
        cell = sym_unpack(field.data[tuple(cube.offset)], d)
        return CoarseGrainPair(cube, cell.copy(), cell.copy(), avg, inv_avg_inv,
                               np.linalg.inv(cell))
    try:
        g, stats = neumann_functionals(field, cube, config)
    except SolverError as err:
        raise SolverError(
            f"cube level={cube.level} offset={cube.offset}: {err}", err.stats
        ) from err
    astar_inv, amax = _pair_matrices_from_g(g, d)
    astar = np.linalg.inv(astar_inv)
    return CoarseGrainPair(cube, astar, amax, avg, inv_avg_inv, astar_inv, stats)


# ---------------------------------------------------------------------------
# Sweeps over all levels, with a per-cube disk cache
# ---------------------------------------------------------------------------

@dataclass
class LevelData:
    """Packed coarse-grained matrices for every cube of one level.

    Arrays have shape ``(3**-level,)*d + (ncomp,)`` in row-major cube order.
    """

    level: int
    astar: np.ndarray
    amax: np.ndarray
    avg: np.ndarray
    inv_avg_inv: np.ndarray
    astar_inv: np.ndarray


@dataclass
class SweepResult:
    """Complete coarse-graining of a field over levels -N..0."""

    grid: GridSpec
    field_hash: str
    config: SolveConfig
    levels: dict[int, LevelData]
    cell_norm: np.ndarray
    cell_inv_norm: np.ndarray
    solve_count: int
    cache_hits: int
    failures: list[dict]

    def pair(self, cube: TriadicCube) -> CoarseGrainPair:
        ld = self.levels[cube.level]
        d = self.grid.d
        idx = tuple(cube.offset)
        return CoarseGrainPair(
            cube,
            sym_unpack(ld.astar[idx], d),
            sym_unpack(ld.amax[idx], d),
            sym_unpack(ld.avg[idx], d),
            sym_unpack(ld.inv_avg_inv[idx], d),
            sym_unpack(ld.astar_inv[idx], d),
        )

    def n_cubes(self) -> int:
        return sum(3 ** (-ld.level * self.grid.d) for ld in self.levels.values())


def _config_fingerprint(config: SolveConfig) -> str:
    return json.dumps(
        {
            "discretization": config.discretization,
            "cg_rel_tol": config.cg_rel_tol,
            "preconditioner": config.preconditioner,
        },
        sort_keys=True,
    )


def _cache_path(cache_dir, field_hash: str, level: int, offset: tuple[int, ...]) -> str:
    name = "_".join(str(z) for z in offset) + ".npz"
    return os.path.join(cache_dir, field_hash, f"level_{level}", name)


def _cache_store(path: str, fingerprint: str, astar_inv: np.ndarray, amax: np.ndarray) -> None:
    os.makedirs(os.path.dirname(path), exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, astar_inv=astar_inv, amax=amax,
                     config=np.frombuffer(fingerprint.encode(), dtype=np.uint8))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cache_load(path: str, fingerprint: str) -> tuple[np.ndarray, np.ndarray] | None:
    if not os.path.exists(path):
        return None
    try:
        with np.load(path) as rec:
            stored = rec["config"].tobytes().decode()
            if stored != fingerprint:
                return None
            return rec["astar_inv"].copy(), rec["amax"].copy()
    except (OSError, KeyError, ValueError):
        return None


def _level_block_means(data: np.ndarray, grid: GridSpec, level: int) -> np.ndarray:
    """Block means of per-cell packed data over the level's cubes."""
    nz = 3 ** (-level)
    m = 3 ** (grid.N + level)
    ncomp = data.shape[-1]
    shape = []
    for _ in range(grid.d):
        shape += [nz, m]
    arr = data.reshape(shape + [ncomp])
    axes = tuple(range(1, 2 * grid.d, 2))
    return arr.mean(axis=axes)


def sweep(
    field: CoefficientField,
    config: SolveConfig = SolveConfig(),
    cache_dir: str | None = None,
    threads: int = 1,
) -> SweepResult:
    """Coarse-grain every cube of every level, with optional disk caching.

    Cached records are keyed by field content hash, cube, and the
    solver-relevant configuration; a warm cache re-run performs zero solves.
    Failures (e.g. CG breakdown on a pathological cube) are recorded per cube
    and surface as NaN matrices rather than aborting the sweep.
    """
    grid = field.grid
    d = grid.d
    ncomp = sym_component_count(d)
    fingerprint = _config_fingerprint(config)
    lo, hi = sym_eig_bounds(field.data, d)
    cell_norm = np.maximum(np.abs(lo), np.abs(hi))
    cell_inv_norm = 1.0 / lo

    levels: dict[int, LevelData] = {}
    solve_count = 0
    cache_hits = 0
    failures: list[dict] = []

    for level in range(0, -grid.N - 1, -1):
        nz = 3 ** (-level)
        avg = _level_block_means(field.data, grid, level)
        inv_avg = _level_block_means(field.inv_data, grid, level)
        inv_avg_inv = sym_inv(inv_avg, d)
        if level == -grid.N:
            astar = field.data.copy()
            amax = field.data.copy()
            astar_inv = field.inv_data.copy()
            levels[level] = LevelData(level, astar, amax, avg, inv_avg_inv, astar_inv)
            continue

        shape = (nz,) * d
        astar_inv_arr = np.full(shape + (ncomp,), np.nan)
        amax_arr = np.full(shape + (ncomp,), np.nan)
        offsets = list(np.ndindex(shape))

        todo = []
        for off in offsets:
            if cache_dir is not None:
                rec = _cache_load(
                    _cache_path(cache_dir, field.content_hash, level, off), fingerprint
                )
                if rec is not None:
                    astar_inv_arr[off], amax_arr[off] = rec
                    cache_hits += 1
                    continue
            todo.append(off)

        nn = (3 ** (grid.N + level) + 1) ** d
        if todo and nn <= config.dense_cutoff and len(todo) == len(offsets):
            # whole level missing: use the vectorized dense path
            g_all, _ = batched_neumann_functionals(field, level, config)
            for off in offsets:
                ai, am = _pair_matrices_from_g(g_all[off], d)
                astar_inv_arr[off] = sym_pack(ai)
                amax_arr[off] = sym_pack(am)
            solve_count += 2 * d * len(offsets)
        elif todo:
            def run_one(off):
                cube = TriadicCube(level, off)
                g, _ = neumann_functionals(field, cube, config)
                return off, g

            results = []
            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    futures = [(off, pool.submit(run_one, off)) for off in todo]
                for off, fut in futures:
                    try:
                        results.append(fut.result())
                    except SolverError as err:
                        failures.append(_failure_entry(level, err, off))
            else:
                for off in todo:
                    try:
                        results.append(run_one(off))
                    except SolverError as err:
                        failures.append(_failure_entry(level, err, off))
            for off, g in results:
                ai, am = _pair_matrices_from_g(g, d)
                astar_inv_arr[off] = sym_pack(ai)
                amax_arr[off] = sym_pack(am)
                solve_count += 2 * d

        if cache_dir is not None:
            for off in todo:
                if np.isnan(astar_inv_arr[off]).any():
                    continue
                _cache_store(
                    _cache_path(cache_dir, field.content_hash, level, off),
                    fingerprint,
                    astar_inv_arr[off],
                    amax_arr[off],
                )

        astar_arr = sym_pack(np.linalg.inv(sym_unpack(astar_inv_arr, d)))
        levels[level] = LevelData(level, astar_arr, amax_arr, avg, inv_avg_inv, astar_inv_arr)

    return SweepResult(
        grid=grid,
        field_hash=field.content_hash,
        config=config,
        levels=levels,
        cell_norm=cell_norm,
        cell_inv_norm=cell_inv_norm,
        solve_count=solve_count,
        cache_hits=cache_hits,
        failures=failures,
    )


def _failure_entry(level: int, err: SolverError, offset) -> dict:
    return {
        "level": level,
        "offset": [int(z) for z in offset],
        "message": str(err),
    }


# ---------------------------------------------------------------------------
# Multiscale ellipticity constants
# ---------------------------------------------------------------------------

@dataclass
class EllipticityReport:
    """Scale-weighted upper/lower ellipticity constants of one cube."""

    s: float
    t: float
    cube: TriadicCube
    lambda_upper: float  # scale-weighted upper constant
    lambda_lower: float  # scale-weighted lower constant
    theta: float
    per_scale_upper: dict[int, float]  # level -> max sqrt(norm(amax))
    per_scale_lower: dict[int, float]  # level -> max sqrt(norm(astar_inv))
    tail_upper: float
    tail_lower: float
    c_s: float
    c_t: float
    field_hash: str

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "t": self.t,
            "cube": {"level": self.cube.level, "offset": list(self.cube.offset)},
            "lambda_upper": self.lambda_upper,
            "lambda_lower": self.lambda_lower,
            "theta": self.theta,
            "per_scale_upper": {str(k): v for k, v in self.per_scale_upper.items()},
            "per_scale_lower": {str(k): v for k, v in self.per_scale_lower.items()},
            "tail_upper": self.tail_upper,
            "tail_lower": self.tail_lower,
            "c_s": self.c_s,
            "c_t": self.c_t,
            "field_hash": self.field_hash,
        }


def _block_max(arr: np.ndarray, factor: int) -> np.ndarray:
    """Max-reduce a (n,)*d array over blocks of side ``factor``."""
    if factor == 1:
        return arr
    d = arr.ndim
    n = arr.shape[0]
    nb = n // factor
    shape = []
    for _ in range(d):
        shape += [nb, factor]
    return arr.reshape(shape).max(axis=tuple(range(1, 2 * d, 2)))


def _level_norm_grids(result: SweepResult) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray]]:
    """Per-level grids of sqrt spectral norms of amax and astar_inv."""
    d = result.grid.d
    upper, lower = {}, {}
    for level, ld in result.levels.items():
        upper[level] = np.sqrt(sym_norm(ld.amax, d))
        lower[level] = np.sqrt(sym_norm(ld.astar_inv, d))
    return upper, lower


def _weighted_scale_sum(
    terms: dict[int, float], cube_level: int, s: float, tail_base: float, grid_n: int
) -> tuple[float, float]:
    """c_s-weighted sum of per-scale maxima plus the sub-grid tail.

    Returns (total_before_squaring, tail_value).
    """
    c_s = 1.0 - 3.0 ** (-s)
    acc = 0.0
    for k in sorted(terms):  # ascending level: fixed reduction order
        acc += 3.0 ** (-s * (cube_level - k)) * terms[k]
    tail = tail_base * 3.0 ** (-s * (cube_level + grid_n + 1)) / (1.0 - 3.0 ** (-s))
    return c_s * (acc + tail), c_s * tail


def ellipticity_constants(
    result: SweepResult, s: float, t: float, cube: TriadicCube | None = None
) -> EllipticityReport:
    """Scale-weighted ellipticity constants and their ratio for one cube.

    The upper constant squares the weighted sum of per-scale maxima of
    ``sqrt(norm(amax))`` over all scales at and below the cube; the lower
    constant is the reciprocal square of the same construction applied to
    ``sqrt(norm(astar_inv))``. Scales below the grid resolution are included
    through an exact geometric tail on the per-cell extremes.
    """
    if not (0.0 < s < 1.0) or not (0.0 < t < 1.0):
        raise ValueError(f"exponents must lie in (0, 1), got s={s}, t={t}")
    grid = result.grid
    if cube is None:
        cube = TriadicCube(0, (0,) * grid.d)
    upper_grids, lower_grids = _level_norm_grids(result)

    per_upper: dict[int, float] = {}
    per_lower: dict[int, float] = {}
    for level in sorted(result.levels):
        if level > cube.level:
            continue
        sub = _restrict_level_grid(upper_grids[level], level, cube)
        per_upper[level] = float(sub.max())
        sub = _restrict_level_grid(lower_grids[level], level, cube)
        per_lower[level] = float(sub.max())

    cell_sl = cube.cell_slices(grid)
    max_cell_upper = math.sqrt(float(result.cell_norm[cell_sl].max()))
    max_cell_lower = math.sqrt(float(result.cell_inv_norm[cell_sl].max()))

    total_u, tail_u = _weighted_scale_sum(per_upper, cube.level, s, max_cell_upper, grid.N)
    total_l, tail_l = _weighted_scale_sum(per_lower, cube.level, t, max_cell_lower, grid.N)

    lambda_upper = total_u**2
    lambda_lower = total_l**-2
    return EllipticityReport(
        s=s,
        t=t,
        cube=cube,
        lambda_upper=lambda_upper,
        lambda_lower=lambda_lower,
        theta=lambda_upper / lambda_lower,
        per_scale_upper=per_upper,
        per_scale_lower=per_lower,
        tail_upper=tail_u,
        tail_lower=tail_l,
        c_s=1.0 - 3.0 ** (-s),
        c_t=1.0 - 3.0 ** (-t),
        field_hash=result.field_hash,
    )


def _restrict_level_grid(grid_arr: np.ndarray, level: int, cube: TriadicCube) -> np.ndarray:
    """Slice a level grid of values to the cubes contained in ``cube``."""
    factor = 3 ** (cube.level - level)
    sl = tuple(slice(z * factor, (z + 1) * factor) for z in cube.offset)
    return grid_arr[sl]


def _lambda_upper_grid(result: SweepResult, s: float, level: int) -> np.ndarray:
    """Upper ellipticity constant of every level-``level`` cube at once."""
    grid = result.grid
    upper_grids, _ = _level_norm_grids(result)
    nz = 3 ** (-level)
    acc = np.zeros((nz,) * grid.d)
    for k in sorted(result.levels):
        if k > level:
            continue
        reduced = _block_max(upper_grids[k], 3 ** (level - k))
        acc += 3.0 ** (-s * (level - k)) * reduced
    cell_max = np.sqrt(_block_max(result.cell_norm, 3 ** (level + grid.N)))
    acc += cell_max * 3.0 ** (-s * (level + grid.N + 1)) / (1.0 - 3.0 ** (-s))
    c_s = 1.0 - 3.0 ** (-s)
    return (c_s * acc) ** 2


# ---------------------------------------------------------------------------
# Audit
# ---------------------------------------------------------------------------

@dataclass
class AuditReport:
    """Wholesale verification of the coarse-graining inequalities.

    Violations are data, not errors: each entry records the check kind, the
    cube, the violation magnitude and the scale it was compared against.
    """

    checked: dict[str, int]
    violations: list[dict]
    max_slack: dict[str, float]
    s_grid: tuple[float, ...]
    slack_rel: float

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "checked": self.checked,
            "violations": self.violations,
            "max_slack": self.max_slack,
            "s_grid": list(self.s_grid),
            "slack_rel": self.slack_rel,
            "ok": self.ok,
        }


def _min_eig_of_difference(hi_packed: np.ndarray, lo_packed: np.ndarray, d: int) -> np.ndarray:
    w, _ = sym_eig_bounds(hi_packed - lo_packed, d)
    return w


def audit(
    result: SweepResult,
    s_grid: Sequence[float] = DEFAULT_S_GRID,
    slack_rel: float = 1e-7,
) -> AuditReport:
    """Check every theorem-backed inequality on a completed sweep.

    Per cube: the quadratic-form chain inv_avg_inv <= astar <= amax <= avg.
    Per parent/children: norm subadditivity of amax and matrix subadditivity
    of astar_inv. Globally: monotonicity of the scale-weighted constants over
    the exponent grid, ratio >= 1, and the per-level scaling bound for the
    upper constant.
    """
    d = result.grid.d
    checked = {k: 0 for k in
               ("chain", "subadditivity_norm", "subadditivity_form", "monotone",
                "theta_ge_1", "scaling")}
    max_slack = {k: 0.0 for k in checked}
    violations: list[dict] = []

    def record(kind, level, offset, magnitude, scale):
        rel = magnitude / max(scale, 1e-300)
        max_slack[kind] = max(max_slack[kind], rel)
        if rel > slack_rel:
            violations.append({
                "kind": kind,
                "level": level,
                "offset": None if offset is None else list(offset),
                "magnitude": float(magnitude),
                "scale": float(scale),
            })

    # --- per-cube chain ---
    for level, ld in result.levels.items():
        norm_hi = sym_norm(ld.avg, d)
        seq = [ld.inv_avg_inv, ld.astar, ld.amax, ld.avg]
        for lo_arr, hi_arr in zip(seq[:-1], seq[1:]):
            w = _min_eig_of_difference(hi_arr, lo_arr, d)
            checked["chain"] += w.size
            bad = np.minimum(w, 0.0)
            for off in zip(*np.nonzero(-bad > slack_rel * norm_hi)):
                record("chain", level, off, -bad[off], norm_hi[off])
            max_slack["chain"] = max(max_slack["chain"],
                                     float((-bad / np.maximum(norm_hi, 1e-300)).max()))

    # --- parent/children subadditivity ---
    for level in sorted(result.levels, reverse=True):
        child_level = level - 1
        if child_level not in result.levels:
            continue
        parent = result.levels[level]
        child = result.levels[child_level]
        child_norm = sym_norm(child.amax, d)
        mean_child_norm = _block_mean(child_norm, 3)
        parent_norm = sym_norm(parent.amax, d)
        checked["subadditivity_norm"] += parent_norm.size
        gap = parent_norm - mean_child_norm
        for off in zip(*np.nonzero(gap > slack_rel * np.maximum(parent_norm, 1e-300))):
            record("subadditivity_norm", level, off, gap[off], parent_norm[off])
        max_slack["subadditivity_norm"] = max(
            max_slack["subadditivity_norm"],
            float((gap / np.maximum(parent_norm, 1e-300)).max()),
        )

        mean_child_form = _block_mean_packed(child.astar_inv, 3, d)
        w = _min_eig_of_difference(mean_child_form, parent.astar_inv, d)
        scale = sym_norm(parent.astar_inv, d)
        checked["subadditivity_form"] += w.size
        for off in zip(*np.nonzero(-np.minimum(w, 0) > slack_rel * scale)):
            record("subadditivity_form", level, off, -w[off], scale[off])
        max_slack["subadditivity_form"] = max(
            max_slack["subadditivity_form"],
            float((-np.minimum(w, 0) / np.maximum(scale, 1e-300)).max()),
        )

    # --- monotonicity / ratio over the exponent grid ---
    s_sorted = sorted(s_grid)
    reports = [ellipticity_constants(result, s, s) for s in s_sorted]
    uppers = [r.lambda_upper for r in reports]
    lowers = [r.lambda_lower for r in reports]
    for i in range(len(s_sorted)):
        checked["theta_ge_1"] += 1
        if reports[i].theta < 1.0 - slack_rel:
            record("theta_ge_1", 0, None, 1.0 - reports[i].theta, 1.0)
        if i > 0:
            checked["monotone"] += 2
            if uppers[i] > uppers[i - 1] * (1 + slack_rel):
                record("monotone", 0, None, uppers[i] - uppers[i - 1], uppers[i - 1])
            if lowers[i] < lowers[i - 1] * (1 - slack_rel):
                record("monotone", 0, None, lowers[i - 1] - lowers[i], lowers[i - 1])
        checked["monotone"] += 1
        if lowers[i] > uppers[i] * (1 + slack_rel):
            record("monotone", 0, None, lowers[i] - uppers[i], uppers[i])

    # --- scaling of the upper constant across levels ---
    lam0 = {s: _lambda_upper_grid(result, s, 0).item() for s in s_sorted}
    for s in s_sorted:
        for level in sorted(result.levels):
            if level == 0:
                continue
            grid_vals = _lambda_upper_grid(result, s, level)
            bound = 3.0 ** (-2 * s * level) * lam0[s]
            checked["scaling"] += grid_vals.size
            gap = grid_vals - bound
            for off in zip(*np.nonzero(gap > slack_rel * bound)):
                record("scaling", level, off, gap[off], bound)
            max_slack["scaling"] = max(max_slack["scaling"], float(gap.max() / bound))

    return AuditReport(
        checked=checked,
        violations=violations,
        max_slack=max_slack,
        s_grid=tuple(s_sorted),
        slack_rel=slack_rel,
    )


def _block_mean(arr: np.ndarray, factor: int) -> np.ndarray:
    d = arr.ndim
    nb = arr.shape[0] // factor
    shape = []
    for _ in range(d):
        shape += [nb, factor]
    return arr.reshape(shape).mean(axis=tuple(range(1, 2 * d, 2)))


def _block_mean_packed(arr: np.ndarray, factor: int, d: int) -> np.ndarray:
    nb = arr.shape[0] // factor
    shape = []
    for _ in range(d):
        shape += [nb, factor]
    shape.append(arr.shape[-1])
    return arr.reshape(shape).mean(axis=tuple(range(1, 2 * d, 2)))