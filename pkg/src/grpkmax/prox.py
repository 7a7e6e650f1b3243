"""Shrinkage operators and the k-max index machinery.

The k-max penalty of a vector ``x`` with parameter ``k`` sums ``|x(j)|`` over
every entry whose magnitude is at most the k-th largest magnitude ``t_k``;
the ``k - 1`` (or fewer, with ties) strictly larger entries are left free.
Its shrinkage operator soft-thresholds the penalized entries and passes the
free ones through untouched.

``t_k`` is found by an in-place three-way quickselect on a scratch copy of
``|x|`` (expected linear time), compiled with numba. Solvers call the grouped
kernels (:func:`grouped_kmax_shrink` and friends), which walk a flat
coefficient vector group by group using an ``offsets`` array.
"""
from dataclasses import dataclass

import numpy as np
from numba import njit


@njit(cache=True)
def _kth_largest(buf, d, k):
    # k-th largest (1-based) of buf[:d]; reorders buf[:d] in place.
    target = k - 1
    lo = 0
    hi = d
    while hi - lo > 1:
        mid = lo + (hi - lo) // 2
        a = buf[lo]
        b = buf[mid]
        c = buf[hi - 1]
        # median of three as pivot
        if a < b:
            if b < c:
                pivot = b
            elif a < c:
                pivot = c
            else:
                pivot = a
        else:
            if a < c:
                pivot = a
            elif b < c:
                pivot = c
            else:
                pivot = b
        # descending three-way partition: [> pivot][== pivot][< pivot]
        gt_end = lo
        i = lo
        lt_start = hi
        while i < lt_start:
            v = buf[i]
            if v > pivot:
                buf[i] = buf[gt_end]
                buf[gt_end] = v
                gt_end += 1
                i += 1
            elif v < pivot:
                lt_start -= 1
                buf[i] = buf[lt_start]
                buf[lt_start] = v
            else:
                i += 1
        if target < gt_end:
            hi = gt_end
        elif target < lt_start:
            return pivot
        else:
            lo = lt_start
    return buf[target]


@njit(cache=True)
def _grouped_threshold(x, offsets, ks, strict, scratch, out_t):
    # out_t[g] = t_{k_g} of group g; +inf marks "everything penalized" (k = 0),
    # -inf marks "nothing penalized" (strict[g] set and k = d).
    for g in range(ks.shape[0]):
        lo = offsets[g]
        hi = offsets[g + 1]
        d = hi - lo
        k = ks[g]
        if k == 0:
            out_t[g] = np.inf
        elif strict[g] and k == d:
            out_t[g] = -np.inf
        else:
            for j in range(d):
                scratch[j] = abs(x[lo + j])
            out_t[g] = _kth_largest(scratch, d, k)


@njit(cache=True)
def _grouped_kmax_shrink(u, offsets, ks, tau, strict, scratch, out):
    n_groups = ks.shape[0]
    thresholds = np.empty(n_groups)
    _grouped_threshold(u, offsets, ks, strict, scratch, thresholds)
    for g in range(n_groups):
        t = thresholds[g]
        for j in range(offsets[g], offsets[g + 1]):
            v = u[j]
            a = abs(v)
            if a > t:
                out[j] = v
            else:
                s = a - tau
                if s > 0.0:
                    out[j] = np.sign(v) * s
                else:
                    out[j] = 0.0


@njit(cache=True)
def _grouped_kmax_penalty(x, offsets, ks, strict, scratch, out):
    n_groups = ks.shape[0]
    thresholds = np.empty(n_groups)
    _grouped_threshold(x, offsets, ks, strict, scratch, thresholds)
    for g in range(n_groups):
        t = thresholds[g]
        total = 0.0
        for j in range(offsets[g], offsets[g + 1]):
            a = abs(x[j])
            if a <= t:
                total += a
        out[g] = total


def _as_vector(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("vector contains non-finite entries")
    return x


def _check_k(k, d, allow_zero=True):
    if isinstance(k, bool) or int(k) != k:
        raise ValueError(f"k must be an integer, got {k!r}")
    k = int(k)
    low = 0 if allow_zero else 1
    if not low <= k <= d:
        raise ValueError(f"k={k} out of range [{low}, {d}]")
    return k


def strict_flags(strict_full, n_groups):
    """Per-group strict-mode flags from a bool or a sequence of bools."""
    if np.ndim(strict_full) == 0:
        return np.full(n_groups, bool(strict_full))
    flags = np.asarray(strict_full, dtype=np.bool_)
    if flags.shape != (n_groups,):
        raise ValueError(f"{flags.size} strict flags for {n_groups} groups")
    return flags


def _check_tau(tau, name="tau"):
    tau = float(tau)
    if not tau >= 0.0:
        raise ValueError(f"{name} must be nonnegative, got {tau}")
    return tau


def kth_max_abs(x, k):
    """Return the k-th largest of ``|x(j)|``, counted with multiplicity.

    Uses partial selection rather than a full sort.

    >>> kth_max_abs([3.0, -1.0, 0.5, 1.0], 2)
    1.0
    """
    x = _as_vector(x)
    if x.size == 0:
        raise ValueError("empty vector")
    k = _check_k(k, x.size, allow_zero=False)
    scratch = np.abs(x)
    return float(_kth_largest(scratch, x.size, k))


@dataclass(frozen=True)
class IndexPartition:
    """The k-max index sets of one group.

    ``plus_set`` holds entries strictly above ``t_k`` (left unpenalized),
    ``eq_set`` entries tied with ``t_k``, ``minus_set`` entries strictly
    below it, and ``leq_set = eq_set | minus_set`` the penalized entries.
    For ``k = 0`` the threshold is ``+inf`` and every index is in ``minus_set``
    and ``leq_set``.
    All index arrays are sorted ascending.
    """

    t_k: float
    eq_set: np.ndarray
    plus_set: np.ndarray
    minus_set: np.ndarray
    leq_set: np.ndarray

    @property
    def has_ties(self):
        """True when more than one entry sits exactly at the threshold."""
        return self.eq_set.size > 1


def partition_indices(x, k):
    """Split the indices of ``x`` around its k-th largest magnitude."""
    x = _as_vector(x)
    k = _check_k(k, x.size)
    idx = np.arange(x.size)
    if k == 0:
        empty = np.empty(0, dtype=np.intp)
        return IndexPartition(np.inf, empty, empty.copy(), idx, idx.copy())
    t = kth_max_abs(x, k)
    a = np.abs(x)
    return IndexPartition(
        t_k=t,
        eq_set=idx[a == t],
        plus_set=idx[a > t],
        minus_set=idx[a < t],
        leq_set=idx[a <= t],
    )


def kmax_penalty(x, k, strict_full=False):
    """Sum of magnitudes over the penalized set of ``partition_indices(x, k)``.

    ``k = 0`` gives the l1 norm. With ``strict_full`` set, ``k = len(x)``
    means no penalty at all instead of penalizing the entries tied at the
    minimum magnitude.
    """
    x = _as_vector(x)
    k = _check_k(k, x.size)
    out = np.empty(1)
    _grouped_kmax_penalty(
        x, np.array([0, x.size]), np.array([k]), np.array([bool(strict_full)]), np.empty(x.size), out
    )
    return float(out[0])


def kmax_shrink(x, k, tau, strict_full=False):
    """Group k-max soft shrinkage of a single vector.

    Entries above the k-th largest magnitude pass through; all others are
    soft-thresholded at ``tau`` (entries with ``|x(j)| <= tau`` become zero).

    >>> kmax_shrink([3.0, -1.0, 0.5], 2, 0.5)
    array([ 3. , -0.5,  0. ])
    >>> kmax_shrink([3.0, -1.0, 0.5], 1, 0.5)
    array([ 2.5, -0.5,  0. ])
    """
    x = _as_vector(x)
    k = _check_k(k, x.size)
    tau = _check_tau(tau)
    out = np.empty_like(x)
    _grouped_kmax_shrink(
        x, np.array([0, x.size]), np.array([k]), tau, np.array([bool(strict_full)]), np.empty(x.size), out
    )
    return out


def grouped_kmax_shrink(u, offsets, ks, tau, strict_full=False, out=None):
    """Apply :func:`kmax_shrink` to every group of a flat vector.

    Little input validation; ``offsets`` and ``ks`` must be int64 arrays with
    ``len(offsets) == len(ks) + 1``. ``strict_full`` is a bool or one bool per group.
    """
    if out is None:
        out = np.empty_like(u)
    scratch = np.empty(int(np.max(np.diff(offsets))))
    strict = strict_flags(strict_full, len(ks))
    _grouped_kmax_shrink(u, offsets, ks, float(tau), strict, scratch, out)
    return out


def kmax_shrinker(offsets, ks, tau, strict_full=False):
    """Pre-bound :func:`grouped_kmax_shrink` for repeated calls in a solver loop."""
    offsets = np.asarray(offsets, dtype=np.int64)
    ks = np.asarray(ks, dtype=np.int64)
    scratch = np.empty(int(np.max(np.diff(offsets))))
    tau = float(tau)
    strict = strict_flags(strict_full, len(ks))

    def shrink(u):
        out = np.empty_like(u)
        _grouped_kmax_shrink(u, offsets, ks, tau, strict, scratch, out)
        return out

    return shrink


def grouped_kmax_penalty(x, offsets, ks, strict_full=False):
    """Per-group k-max penalty values of a flat vector."""
    out = np.empty(len(ks))
    scratch = np.empty(int(np.max(np.diff(offsets))))
    _grouped_kmax_penalty(
        np.ascontiguousarray(x, dtype=np.float64), offsets, ks, strict_flags(strict_full, len(ks)),
        scratch, out,
    )
    return out


def soft_threshold(x, tau):
    """Entrywise ``sgn(x) * max(|x| - tau, 0)``: the prox of ``tau * ||.||_1``."""
    tau = _check_tau(tau)
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def block_shrink(x, tau):
    """Scale ``x`` by ``max(1 - tau / ||x||_2, 0)``; the zero vector maps to itself."""
    tau = _check_tau(tau)
    x = np.asarray(x, dtype=np.float64)
    norm = np.linalg.norm(x)
    if norm == 0.0:
        return np.zeros_like(x)
    return max(1.0 - tau / norm, 0.0) * x


def sparse_group_shrink(x, tau_group, tau_l1):
    """Prox of ``tau_group * ||.||_2 + tau_l1 * ||.||_1``: soft threshold, then block shrink."""
    _check_tau(tau_group, "tau_group")
    return block_shrink(soft_threshold(x, _check_tau(tau_l1, "tau_l1")), tau_group)


@njit(cache=True)
def _grouped_block_shrink(u, offsets, taus, out):
    for g in range(taus.shape[0]):
        lo = offsets[g]
        hi = offsets[g + 1]
        sq = 0.0
        for j in range(lo, hi):
            sq += u[j] * u[j]
        norm = np.sqrt(sq)
        factor = max(1.0 - taus[g] / norm, 0.0) if norm > 0.0 else 0.0
        for j in range(lo, hi):
            out[j] = factor * u[j]


@njit(cache=True)
def group_norm_sum(v, offsets):
    """``sum_g ||v_g||_2`` over the groups delimited by ``offsets``."""
    total = 0.0
    for g in range(offsets.shape[0] - 1):
        sq = 0.0
        for j in range(offsets[g], offsets[g + 1]):
            sq += v[j] * v[j]
        total += np.sqrt(sq)
    return total


def grouped_block_shrink(u, offsets, taus, out=None):
    """Block shrinkage of each group with its own threshold ``taus[g]``."""
    u = np.ascontiguousarray(u, dtype=np.float64)
    if out is None:
        out = np.empty_like(u)
    _grouped_block_shrink(u, offsets, np.asarray(taus, dtype=np.float64), out)
    return out
