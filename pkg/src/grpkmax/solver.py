"""Iterative soft thresholding for the four grouped penalties.

All penalties share one loop::

    u     = x + gamma * Phi^T (y - Phi x)
    x_new = shrink(u)            # per-group operator of the penalty, threshold gamma*lam

stopping once ``sum_i ||x_i_new - x_i||_2 <= tol`` or after ``max_iters``
updates. ``gamma`` is 1 in ``unit`` mode (only sensible when ``||Phi||_2 <= 1``)
and ``1/L`` in ``lipschitz`` mode, with ``L`` the top eigenvalue of
``Phi^T Phi`` from power iteration.
"""
import math
import time
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionError, DivergenceError, PowerIterationWarning
from .model import GroupedVector, objective
from .prox import _grouped_block_shrink, group_norm_sum, kmax_shrinker

STEP_MODES = ("unit", "lipschitz")


@dataclass(frozen=True)
class SolveOptions:
    max_iters: int = 500
    tol: float = 1e-4
    step_mode: str = "lipschitz"
    record_trace: bool = False
    # precomputed top eigenvalue of Phi^T Phi; skips power iteration when set
    lipschitz: float = None

    def __post_init__(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be a positive integer, got {self.max_iters}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.step_mode not in STEP_MODES:
            raise ValueError(f"step_mode must be one of {STEP_MODES}, got {self.step_mode!r}")


@dataclass
class SolveResult:
    x: GroupedVector
    iterations: int
    terminated_by: str  # "tolerance" or "max_iters"
    gamma: float
    final_gap: float
    wall_time: float
    loop_time: float
    objective_trace: list = None
    iterate_gap_trace: list = None
    iterates: list = None

    @property
    def time_per_iteration(self):
        return self.loop_time / self.iterations


def lipschitz_estimate(design, tol=1e-6, max_iter=1000, seed=0):
    """Estimate the largest eigenvalue of ``Phi^T Phi`` by power iteration.

    Returns ``||Phi^T Phi v||`` for the final unit iterate ``v``, which never
    exceeds the true value and is at least the Rayleigh quotient. Emits
    :class:`PowerIterationWarning` and returns the best estimate if the
    relative change does not drop below ``tol`` within ``max_iter`` steps.
    """
    A = getattr(design, "matrix", design)
    A = np.asarray(A, dtype=np.float64)
    v = np.random.default_rng(seed).standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    est_old = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        est = np.linalg.norm(w)
        if est == 0.0:
            return 0.0
        v = w / est
        if abs(est - est_old) <= tol * est:
            return float(est)
        est_old = est
    warnings.warn(
        f"power iteration did not reach relative tolerance {tol} in {max_iter} steps; "
        f"returning best estimate {est:.6g}",
        PowerIterationWarning,
        stacklevel=2,
    )
    return float(est)


def step_size(design, options):
    if options.step_mode == "unit":
        return 1.0
    L = options.lipschitz if options.lipschitz is not None else lipschitz_estimate(design)
    return 1.0 / L if L > 0 else 1.0


def shrink_operator(penalty, sizes, gamma):
    """Return ``u -> shrink(u)`` for the penalty at step ``gamma`` on a flat vector."""
    penalty.validate(sizes)
    offsets = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    tau = gamma * penalty.lam
    kind = penalty.kind
    if kind == "lasso":
        return lambda u: np.sign(u) * np.maximum(np.abs(u) - tau, 0.0)
    if kind == "group-kmax":
        return kmax_shrinker(offsets, penalty.ks(), tau, penalty.strict_full)
    taus = tau * penalty.weights(sizes)
    tau_l1 = gamma * penalty.mu

    def shrink(u):
        if kind == "sparse-group-lasso":
            u = np.sign(u) * np.maximum(np.abs(u) - tau_l1, 0.0)
        out = np.empty_like(u)
        _grouped_block_shrink(u, offsets, taus, out)
        return out

    return shrink


def group_gap(diff, offsets):
    """``sum_i ||diff_i||_2`` over the groups delimited by ``offsets``."""
    return float(group_norm_sum(np.ascontiguousarray(diff, dtype=np.float64), offsets))


def solve(design, penalty, options=None, x0=None):
    """Run the iterative soft thresholding loop for one penalty setting.

    Starts from ``gamma * Phi^T y`` unless ``x0`` is given. Raises
    :class:`DivergenceError` if an iterate becomes non-finite.
    """
    start = time.perf_counter()
    options = options or SolveOptions()
    penalty.validate(design.sizes)
    Phi = design.matrix
    y = design.response
    offsets = design.offsets
    gamma = step_size(design, options)
    shrink = shrink_operator(penalty, design.sizes, gamma)

    if x0 is None:
        x = gamma * (Phi.T @ y)
    else:
        x = np.array(x0.flat if isinstance(x0, GroupedVector) else x0, dtype=np.float64)
        if x.shape != (design.d,):
            raise DimensionError(f"warm start of shape {x.shape}, expected ({design.d},)")

    record = options.record_trace
    iterates = [x.copy()] if record else None
    objectives = [objective(design, x, penalty)] if record else None
    gaps = [] if record else None

    loop_start = time.perf_counter()
    terminated_by = "max_iters"
    gap = np.inf
    t = 0
    # overflow is reported as DivergenceError below, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        while t < options.max_iters:
            u = x + gamma * (Phi.T @ (y - Phi @ x))
            t += 1
            # a sum overflows or turns NaN whenever any entry does
            if not math.isfinite(u.sum()):
                raise DivergenceError(t)
            x_new = shrink(u)
            gap = group_norm_sum(x_new - x, offsets)
            x = x_new
            if record:
                iterates.append(x.copy())
                objectives.append(objective(design, x, penalty))
                gaps.append(gap)
            if gap <= options.tol:
                terminated_by = "tolerance"
                break
    end = time.perf_counter()

    return SolveResult(
        x=GroupedVector(x, design.sizes),
        iterations=t,
        terminated_by=terminated_by,
        gamma=gamma,
        final_gap=gap,
        wall_time=end - start,
        loop_time=end - loop_start,
        objective_trace=objectives,
        iterate_gap_trace=gaps,
        iterates=iterates,
    )


def solve_path(design, penalty_template, lambdas, options=None, warm_start=True):
    """Solve once per ``lam`` in the given order.

    Each solve after the first starts from the previous solution unless
    ``warm_start`` is off. The step size is computed once for the whole path.
    """
    lambdas = list(lambdas)
    if not lambdas:
        raise ValueError("empty lambda grid")
    if any(not lam >= 0 for lam in lambdas):
        raise ValueError("lambda values must be nonnegative")
    options = options or SolveOptions()
    if options.step_mode == "lipschitz" and options.lipschitz is None:
        options = replace(options, lipschitz=lipschitz_estimate(design))
    results = []
    prev = None
    for lam in lambdas:
        res = solve(design, penalty_template.replace(lam=lam), options, x0=prev)
        results.append(res)
        if warm_start:
            prev = res.x
    return results
