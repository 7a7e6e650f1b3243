"""Synthetic data, recovery metrics, cross-validation and benchmark runs."""
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .model import GroupedDesign, GroupedVector, PenaltySpec, predict
from .solver import SolveOptions, lipschitz_estimate, solve

#: nonzeros per group in the reference synthetic setup (10 groups)
REFERENCE_SPARSITY = (10, 8, 6, 4, 2, 1, 0, 0, 0, 0)

METHODS = ("lasso", "grouplasso", "sparsegrouplasso", "grpkmax", "grpkmax-prior")

#: default lambda grid, as fractions of the smallest lambda giving an all-zero fit
DEFAULT_LAMBDA_FRACTIONS = tuple(np.geomspace(1e-2, 1.0, 10))

#: default in-group l1 weights of the sparse group lasso, relative to lambda
DEFAULT_MU_RATIOS = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


def default_sparsity(m, d_per_group=10):
    """Reference sparsity pattern truncated or zero-padded to ``m`` groups."""
    s = list(REFERENCE_SPARSITY[:m]) + [0] * max(0, m - len(REFERENCE_SPARSITY))
    return tuple(min(v, d_per_group) for v in s)


@dataclass(frozen=True)
class SyntheticConfig:
    n: int = 200
    m: int = 10
    d_per_group: int = 10
    s: tuple = None
    noise_variance: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.d_per_group < 1:
            raise ValueError("n, m and d_per_group must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")
        s = default_sparsity(self.m, self.d_per_group) if self.s is None else tuple(int(v) for v in self.s)
        if len(s) != self.m:
            raise ValueError(f"{len(s)} sparsity levels for {self.m} groups")
        if any(not 0 <= v <= self.d_per_group for v in s):
            raise ValueError(f"sparsity levels {s} must lie in [0, {self.d_per_group}]")
        object.__setattr__(self, "s", s)

    @property
    def sizes(self):
        return (self.d_per_group,) * self.m


def gen_synthetic(config):
    """Draw a grouped design with Gaussian entries and a +-1 sparse ground truth.

    Returns ``(design, truth)``; the result depends only on ``config``.
    """
    rng = np.random.default_rng(config.seed)
    n, sizes = config.n, config.sizes
    groups = [rng.standard_normal((n, d)) for d in sizes]
    blocks = []
    for d, s in zip(sizes, config.s):
        block = np.zeros(d)
        support = rng.choice(d, size=s, replace=False)
        block[support] = rng.choice([-1.0, 1.0], size=s)
        blocks.append(block)
    truth = GroupedVector.from_blocks(blocks)
    noise = np.sqrt(config.noise_variance) * rng.standard_normal(n)
    y = sum(g @ b for g, b in zip(groups, blocks)) + noise
    return GroupedDesign(tuple(groups), y), truth


def _flat(v):
    return np.asarray(v.flat if isinstance(v, GroupedVector) else v, dtype=np.float64)


def rmse_pct(est, truth):
    """Relative coefficient error ``100 * ||est - truth|| / ||truth||``."""
    est, truth = _flat(est), _flat(truth)
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch {est.shape} vs {truth.shape}")
    norm = np.linalg.norm(truth)
    if norm == 0:
        raise ValueError("ground truth has zero norm")
    return 100.0 * float(np.linalg.norm(est - truth)) / float(norm)


def cpr_pct(est, truth, tol=1e-6):
    """Percentage of true nonzeros that are above ``tol`` in the estimate."""
    est, truth = _flat(est), _flat(truth)
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch {est.shape} vs {truth.shape}")
    support = truth != 0
    if not support.any():
        raise ValueError("ground truth has no nonzero entries")
    return 100.0 * int(np.count_nonzero(np.abs(est[support]) > tol)) / int(np.count_nonzero(support))


def sparsity_stats(x, tol=1e-6, sizes=None):
    """``(entries above tol, groups with at least one such entry)``."""
    if isinstance(x, GroupedVector):
        sizes = x.sizes
    flat = _flat(x)
    if sizes is None:
        sizes = (flat.size,)
    mask = np.abs(flat) > tol
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    per_group = np.add.reduceat(mask.astype(np.int64), offsets[:-1]) if flat.size else np.zeros(0)
    return int(mask.sum()), int(np.count_nonzero(per_group))


@dataclass
class MetricsRecord:
    rmse_pct: float
    cpr_pct: float
    nnz_overall: int
    nnz_groups: int
    wall_time: float
    hyperparams: PenaltySpec

    def row(self):
        """Flat dict for tabular output; wall time is left out so tables stay reproducible."""
        hp = self.hyperparams
        return {
            "lambda": hp.lam,
            "mu": hp.mu,
            "k": "" if hp.k is None else " ".join(map(str, hp.k)),
            "cpr_pct": self.cpr_pct,
            "rmse_pct": self.rmse_pct,
            "nnz_overall": self.nnz_overall,
            "nnz_groups": self.nnz_groups,
        }


def lambda_max(design, penalty_template):
    """Smallest ``lam`` whose solution is identically zero (upper bound for sparse group lasso)."""
    grad = design.matrix.T @ design.response
    if penalty_template.kind in ("lasso", "group-kmax"):
        return float(np.abs(grad).max())
    norms = np.sqrt(np.add.reduceat(grad * grad, design.offsets[:-1]))
    return float((norms / penalty_template.weights(design.sizes)).max())


def fold_indices(n, folds, seed=0):
    """Shuffle ``range(n)`` with ``seed`` and cut it into ``folds`` contiguous blocks."""
    if not 2 <= folds <= n:
        raise ValueError(f"folds must lie in [2, n={n}], got {folds}")
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, folds)


@dataclass
class CVResult:
    best: PenaltySpec
    lambdas: np.ndarray
    mus: np.ndarray
    # mean held-out squared error, shape (len(mus), len(lambdas))
    scores: np.ndarray
    folds: int
    mu_relative: bool = False

    def cells(self):
        for i, mu in enumerate(self.mus):
            for j, lam in enumerate(self.lambdas):
                yield lam, (mu * lam if self.mu_relative else mu), self.scores[i, j]


def cross_validate(design, penalty_template, lambda_grid, mu_grid=None, folds=10, seed=0,
                   options=None, mu_relative=False, warm_start=True):
    """K-fold cross-validation over a lambda (and optionally mu) grid.

    Rows are shuffled with ``seed`` and split into ``folds`` contiguous
    blocks. Each cell is trained on all blocks but one and scored by mean
    squared prediction error on the held-out block; the cell with the lowest
    average wins, ties going to the larger lambda. With ``mu_relative`` the mu
    grid holds ratios and the cell's mu is ``ratio * lambda``.
    """
    lambdas = np.asarray(list(lambda_grid), dtype=np.float64)
    if lambdas.size == 0:
        raise ValueError("empty lambda grid")
    if mu_grid is None:
        mus = np.array([penalty_template.mu])
    else:
        mus = np.asarray(list(mu_grid), dtype=np.float64)
        if mus.size == 0:
            raise ValueError("empty mu grid")
    options = options or SolveOptions()
    # descending lambda order makes warm starts move from sparse to dense
    order = np.argsort(-lambdas, kind="stable")
    blocks = fold_indices(design.n, folds, seed)
    errors = np.zeros((mus.size, lambdas.size))
    for held in range(folds):
        test = blocks[held]
        train = np.concatenate([b for i, b in enumerate(blocks) if i != held])
        d_train = design.subset_rows(train)
        d_test = design.subset_rows(test)
        fold_opts = options
        if options.step_mode == "lipschitz":
            fold_opts = replace(options, lipschitz=lipschitz_estimate(d_train))
        for i, mu in enumerate(mus):
            prev = None
            for j in order:
                lam = lambdas[j]
                spec = penalty_template.replace(lam=lam)
                if mu_grid is not None:
                    spec = spec.replace(mu=mu * lam if mu_relative else mu)
                res = solve(d_train, spec, fold_opts, x0=prev)
                if warm_start:
                    prev = res.x
                r = d_test.response - predict(d_test, res.x)
                errors[i, j] += float(r @ r) / test.size
    scores = errors / folds
    best_score = scores.min()
    i_best, j_best = max(zip(*np.nonzero(scores == best_score)), key=lambda ij: (lambdas[ij[1]], mus[ij[0]]))
    best = penalty_template.replace(lam=float(lambdas[j_best]))
    if mu_grid is not None:
        mu = mus[i_best] * lambdas[j_best] if mu_relative else mus[i_best]
        best = best.replace(mu=float(mu))
    return CVResult(best, lambdas, mus, scores, folds, mu_relative)


def k_from_solution(x, sizes, tol=1e-6):
    """Per-group count of entries above ``tol``, clamped to ``[0, d_i]``."""
    flat = _flat(x)
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    counts = np.add.reduceat((np.abs(flat) > tol).astype(np.int64), offsets[:-1])
    return tuple(int(min(max(c, 0), d)) for c, d in zip(counts, sizes))


def k_from_support(support, sizes):
    """Penalty k that leaves ``support[i]`` entries of group i free.

    The k-max operator penalizes every entry tied with or below the k-th
    largest magnitude, so ``k - 1`` entries escape; freeing ``s`` entries
    takes ``k = s + 1``, capped at ``d_i``. ``s = 0`` maps to ``k = 0``. A
    fully supported group (``s = d_i``) also gets ``k = d_i`` and needs the
    strict convention to be left unpenalized, see :func:`strict_from_support`.
    """
    if len(support) != len(sizes):
        raise ValueError(f"{len(support)} support sizes for {len(sizes)} groups")
    return tuple(0 if s <= 0 else min(int(s) + 1, d) for s, d in zip(support, sizes))


def strict_from_support(support, sizes):
    """Per-group strict flags: set for groups whose support fills the group."""
    if len(support) != len(sizes):
        raise ValueError(f"{len(support)} support sizes for {len(sizes)} groups")
    return tuple(bool(s >= d) for s, d in zip(support, sizes))


def init_k_from_lasso(design, lambda_grid, cv_folds=10, seed=0, options=None, tol=1e-6, cv=None):
    """Choose per-group k from the support of a cross-validated lasso fit.

    A precomputed lasso :class:`CVResult` may be passed as ``cv``.
    """
    options = options or SolveOptions()
    if cv is None:
        template = PenaltySpec("lasso", 0.0)
        if lambda_grid is None:
            lambda_grid = lambda_max(design, template) * np.asarray(DEFAULT_LAMBDA_FRACTIONS)
        cv = cross_validate(design, template, lambda_grid, folds=cv_folds, seed=seed, options=options)
    fit = solve(design, cv.best, options)
    return k_from_solution(fit.x, design.sizes, tol)


@dataclass
class MethodSetup:
    """Grids and solver settings shared by every method of a benchmark run."""

    lambda_fractions: tuple = DEFAULT_LAMBDA_FRACTIONS
    lambda_grid: tuple = None  # absolute grid; overrides lambda_fractions
    mu_ratios: tuple = DEFAULT_MU_RATIOS
    folds: int = 10
    options: SolveOptions = field(default_factory=SolveOptions)
    support_tol: float = 1e-6

    def grid(self, design, template):
        if self.lambda_grid is not None:
            return np.asarray(self.lambda_grid, dtype=np.float64)
        return lambda_max(design, template) * np.asarray(self.lambda_fractions)


def template_for(method, sizes, k=None, strict_full=False):
    if method == "lasso":
        return PenaltySpec("lasso", 0.0)
    if method == "grouplasso":
        return PenaltySpec("group-lasso", 0.0)
    if method == "sparsegrouplasso":
        return PenaltySpec("sparse-group-lasso", 0.0)
    if method in ("grpkmax", "grpkmax-prior"):
        if k is None:
            raise ValueError(f"method {method} needs per-group k")
        return PenaltySpec("group-kmax", 0.0, k=tuple(k), strict_full=strict_full)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def fit_method(design, method, setup, seed=0, support=None, lasso_cv=None):
    """Cross-validate one method and refit it on the full design.

    Returns ``(solve_result, cv_result, wall_time)``. ``grpkmax-prior`` needs
    the per-group ``support`` sizes; ``grpkmax`` takes them from a lasso fit
    (reusing ``lasso_cv`` when given). Both turn support sizes into penalty
    k values with :func:`k_from_support` and :func:`strict_from_support`.
    """
    start = time.perf_counter()
    options = setup.options
    if options.step_mode == "lipschitz" and options.lipschitz is None:
        options = replace(options, lipschitz=lipschitz_estimate(design))
    k, strict = None, False
    if method == "grpkmax":
        if lasso_cv is None:
            lasso_t = template_for("lasso", design.sizes)
            lasso_cv = cross_validate(design, lasso_t, setup.grid(design, lasso_t), folds=setup.folds,
                                      seed=seed, options=setup.options)
        support = init_k_from_lasso(design, None, options=options, tol=setup.support_tol, cv=lasso_cv)
    if method in ("grpkmax", "grpkmax-prior"):
        if support is None:
            raise ValueError("grpkmax-prior needs the per-group support sizes")
        k = k_from_support(support, design.sizes)
        strict = strict_from_support(support, design.sizes)
    template = template_for(method, design.sizes, k, strict)
    grid = setup.grid(design, template)
    mu_grid = setup.mu_ratios if method == "sparsegrouplasso" else None
    cv = cross_validate(design, template, grid, mu_grid=mu_grid, folds=setup.folds, seed=seed,
                        options=setup.options, mu_relative=True)
    fit = solve(design, cv.best, options)
    return fit, cv, time.perf_counter() - start


def run_synthetic_trial(config, methods, setup):
    """Generate one instance and evaluate every method on it.

    Returns ``{method: MetricsRecord}``. The lasso CV is shared with
    ``grpkmax``'s k initialization when both are requested.
    """
    design, truth = gen_synthetic(config)
    records = {}
    lasso_cv = None
    for method in methods:
        support = config.s if method == "grpkmax-prior" else None
        fit, cv, wall = fit_method(design, method, setup, seed=config.seed, support=support,
                                   lasso_cv=lasso_cv)
        if method == "lasso":
            lasso_cv = cv
        nnz, groups = sparsity_stats(fit.x, setup.support_tol)
        records[method] = MetricsRecord(
            rmse_pct=rmse_pct(fit.x, truth),
            cpr_pct=cpr_pct(fit.x, truth, setup.support_tol),
            nnz_overall=nnz,
            nnz_groups=groups,
            wall_time=wall,
            hyperparams=cv.best,
        )
    return records


def summarize(records):
    """Mean of each numeric metric over a list of :class:`MetricsRecord`."""
    keys = ("cpr_pct", "rmse_pct", "nnz_overall", "nnz_groups", "wall_time")
    return {key: float(np.mean([getattr(r, key) for r in records])) for key in keys}


def config_dict(config):
    out = asdict(config)
    out["s"] = list(config.s)
    return out
