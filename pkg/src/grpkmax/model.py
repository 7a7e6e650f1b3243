"""Grouped least-squares problem data and objective evaluation."""
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import DimensionError
from .prox import grouped_kmax_penalty

KINDS = ("lasso", "group-lasso", "sparse-group-lasso", "group-kmax")


def _offsets(sizes):
    return np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)


@dataclass(frozen=True, eq=False)
class GroupedVector:
    """Coefficients split into consecutive blocks of the given sizes."""

    flat: np.ndarray
    sizes: tuple

    def __post_init__(self):
        flat = np.array(self.flat, dtype=np.float64).reshape(-1)
        sizes = tuple(int(s) for s in self.sizes)
        if any(s < 1 for s in sizes):
            raise DimensionError(f"group sizes must be positive, got {sizes}")
        if flat.size != sum(sizes):
            raise DimensionError(f"vector of length {flat.size} does not match group sizes {sizes}")
        flat.setflags(write=False)
        object.__setattr__(self, "flat", flat)
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def from_blocks(cls, blocks):
        blocks = [np.atleast_1d(np.asarray(b, dtype=np.float64)) for b in blocks]
        return cls(np.concatenate(blocks), tuple(b.size for b in blocks))

    @classmethod
    def zeros(cls, sizes):
        return cls(np.zeros(sum(sizes)), tuple(sizes))

    @cached_property
    def offsets(self):
        return _offsets(self.sizes)

    @property
    def blocks(self):
        return [self.flat[a:b] for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def __len__(self):
        return self.flat.size

    def __eq__(self, other):
        if not isinstance(other, GroupedVector):
            return NotImplemented
        return self.sizes == other.sizes and np.array_equal(self.flat, other.flat)


@dataclass(frozen=True, eq=False)
class GroupedDesign:
    """Per-group observation matrices ``groups[i]`` (n x d_i) and the response ``y``.

    The column-concatenated matrix is available as ``matrix``.
    """

    groups: tuple
    response: np.ndarray
    matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        groups = tuple(np.atleast_2d(np.asarray(g, dtype=np.float64)) for g in self.groups)
        y = np.asarray(self.response, dtype=np.float64).reshape(-1)
        if not groups:
            raise DimensionError("a design needs at least one group")
        n = y.size
        if n < 1:
            raise DimensionError("response must have at least one observation")
        for i, g in enumerate(groups):
            if g.ndim != 2 or g.shape[0] != n:
                raise DimensionError(f"group {i} has shape {g.shape}, expected ({n}, d_i)")
            if g.shape[1] < 1:
                raise DimensionError(f"group {i} has no columns")
        matrix = np.ascontiguousarray(np.hstack(groups))
        for arr in (*groups, y, matrix):
            arr.setflags(write=False)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def from_matrix(cls, matrix, sizes, response):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != sum(sizes):
            raise DimensionError(f"matrix shape {matrix.shape} does not match group sizes {tuple(sizes)}")
        offs = _offsets(sizes)
        return cls(tuple(matrix[:, a:b] for a, b in zip(offs[:-1], offs[1:])), response)

    @property
    def n(self):
        return self.response.size

    @property
    def m(self):
        return len(self.groups)

    @cached_property
    def sizes(self):
        return tuple(g.shape[1] for g in self.groups)

    @property
    def d(self):
        return self.matrix.shape[1]

    @cached_property
    def offsets(self):
        return _offsets(self.sizes)

    def subset_rows(self, rows):
        """Design restricted to the given observation indices."""
        rows = np.asarray(rows)
        return GroupedDesign.from_matrix(self.matrix[rows], self.sizes, self.response[rows])

    def with_response(self, response):
        return GroupedDesign(self.groups, response)


@dataclass(frozen=True)
class PenaltySpec:
    """Which regularizer to use and its parameters.

    ``lam`` is the main weight in every kind. ``mu`` is the in-group l1
    weight of the sparse group lasso. ``k`` lists the number of free
    (unpenalized) entries per group for the k-max penalty. ``group_weights``
    scale the group norms of the group-lasso kinds and default to
    ``sqrt(d_i)``. ``strict_full`` makes ``k_i = d_i`` mean "group
    unpenalized" instead of penalizing the entries tied at the minimum; it is
    a single bool or one bool per group.
    """

    kind: str
    lam: float
    mu: float = 0.0
    k: tuple = None
    group_weights: tuple = None
    strict_full: object = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}; expected one of {KINDS}")
        if not float(self.lam) >= 0.0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if not float(self.mu) >= 0.0:
            raise ValueError(f"mu must be nonnegative, got {self.mu}")
        if self.mu and self.kind != "sparse-group-lasso":
            raise ValueError("mu is only used by the sparse-group-lasso penalty")
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "mu", float(self.mu))
        if self.kind == "group-kmax":
            if self.k is None:
                raise ValueError("group-kmax penalty needs per-group k values")
            object.__setattr__(self, "k", tuple(int(v) for v in self.k))
        if self.group_weights is not None:
            object.__setattr__(self, "group_weights", tuple(float(w) for w in self.group_weights))
        if np.ndim(self.strict_full) == 0:
            object.__setattr__(self, "strict_full", bool(self.strict_full))
        else:
            object.__setattr__(self, "strict_full", tuple(bool(v) for v in self.strict_full))

    def validate(self, sizes):
        """Check the per-group parameters against a group structure."""
        sizes = tuple(sizes)
        if self.kind == "group-kmax":
            if len(self.k) != len(sizes):
                raise DimensionError(f"{len(self.k)} k values for {len(sizes)} groups")
            for i, (k, d) in enumerate(zip(self.k, sizes)):
                if not 0 <= k <= d:
                    raise ValueError(f"k[{i}]={k} out of range [0, {d}]")
            if isinstance(self.strict_full, tuple) and len(self.strict_full) != len(sizes):
                raise DimensionError(f"{len(self.strict_full)} strict flags for {len(sizes)} groups")
        if self.group_weights is not None:
            if len(self.group_weights) != len(sizes):
                raise DimensionError(f"{len(self.group_weights)} group weights for {len(sizes)} groups")
            if any(not w > 0 for w in self.group_weights):
                raise ValueError("group weights must be positive")
        return self

    def weights(self, sizes):
        if self.group_weights is not None:
            return np.asarray(self.group_weights, dtype=np.float64)
        return np.sqrt(np.asarray(sizes, dtype=np.float64))

    def ks(self):
        return np.asarray(self.k, dtype=np.int64)

    def is_strict(self, i):
        """Whether group ``i`` uses the strict ``k = d`` convention."""
        return self.strict_full[i] if isinstance(self.strict_full, tuple) else self.strict_full

    def replace(self, **changes):
        return replace(self, **changes)


def _flat(design, x):
    if isinstance(x, GroupedVector):
        if x.sizes != design.sizes:
            raise DimensionError(f"coefficient groups {x.sizes} do not match design groups {design.sizes}")
        return x.flat
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (design.d,):
        raise DimensionError(f"coefficient vector of shape {x.shape}, expected ({design.d},)")
    return x


def predict(design, x):
    """Return ``sum_i Phi_i x_i``."""
    return design.matrix @ _flat(design, x)


def residual(design, x):
    return design.response - predict(design, x)


def penalty_value(x, penalty, sizes):
    """Value of the regularizer, ``lam`` and ``mu`` weights included."""
    x = np.asarray(x.flat if isinstance(x, GroupedVector) else x, dtype=np.float64)
    penalty.validate(sizes)
    offsets = _offsets(sizes)
    kind = penalty.kind
    if kind == "lasso":
        return penalty.lam * np.abs(x).sum()
    if kind == "group-kmax":
        return penalty.lam * grouped_kmax_penalty(x, offsets, penalty.ks(), penalty.strict_full).sum()
    norms = np.sqrt(np.add.reduceat(x * x, offsets[:-1]))
    value = penalty.lam * np.dot(penalty.weights(sizes), norms)
    if kind == "sparse-group-lasso":
        value += penalty.mu * np.abs(x).sum()
    return value


def objective(design, x, penalty, scale="sum"):
    """Penalized least-squares objective.

    With ``scale="sum"`` the loss is ``0.5 * ||y - Phi x||^2``; with
    ``scale="mean"`` it is divided by ``n``. The penalty term is not rescaled,
    see :func:`convert_lambda`.
    """
    r = residual(design, x)
    loss = 0.5 * float(r @ r)
    if scale == "mean":
        loss /= design.n
    elif scale != "sum":
        raise ValueError(f"unknown loss scale {scale!r}")
    return loss + float(penalty_value(_flat(design, x), penalty, design.sizes))


def convert_lambda(lam, n, from_scale="mean", to_scale="sum"):
    """Translate a penalty weight between the ``1/2`` and ``1/(2n)`` loss conventions.

    Minimizers of ``0.5/n ||r||^2 + lam * P`` and ``0.5 ||r||^2 + (n * lam) * P``
    coincide, so ``mean -> sum`` multiplies by ``n``.
    """
    factors = {"sum": 1.0, "mean": float(n)}
    try:
        return lam * factors[from_scale] / factors[to_scale]
    except KeyError as exc:
        raise ValueError(f"unknown loss scale {exc.args[0]!r}") from None
