"""Dense real tensor algebra: contraction, truncated SVD and QR splits.

All tensors are plain ``numpy.ndarray`` of float64 in C (row-major) order;
the flat buffer of a tensor is exactly its row-major linearization over the
shape tuple, which is also the layout written by :mod:`pepsmetts.checkpoint`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

Tensor = np.ndarray

DEFAULT_REL_CUTOFF = 1e-12


@dataclass
class SvdResult:
    """Truncated SVD of a tensor split into a row group and a column group.

    u has the row axes plus a trailing bond axis (orthonormal columns),
    v has a leading bond axis plus the column axes (orthonormal rows) and
    already contains the singular values contracted into neither factor.
    """

    u: Tensor
    s: np.ndarray
    v: Tensor
    discarded_weight: float


def _check_finite(t: Tensor, what: str) -> None:
    if t.size == 0:
        raise ValueError(f"{what}: empty tensor")
    if not np.all(np.isfinite(t)):
        raise ValueError(f"{what}: non-finite values")


def contract(a: Tensor, b: Tensor, pairs: list[tuple[int, int]]) -> Tensor:
    """Pairwise contraction of two tensors over the given axis pairs.

    Result axes are the unpaired axes of ``a`` in order, followed by the
    unpaired axes of ``b``.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    ax_a = [p[0] for p in pairs]
    ax_b = [p[1] for p in pairs]
    if len(set(ax_a)) != len(ax_a) or len(set(ax_b)) != len(ax_b):
        raise ValueError("contract: repeated axis in pairs")
    for i, j in pairs:
        if not (0 <= i < a.ndim and 0 <= j < b.ndim):
            raise ValueError(f"contract: axis pair ({i}, {j}) out of range")
        if a.shape[i] != b.shape[j]:
            raise ValueError(
                f"contract: extent mismatch on pair ({i}, {j}): "
                f"{a.shape[i]} != {b.shape[j]}"
            )
    return np.tensordot(a, b, axes=(ax_a, ax_b))


def _split_axes(t: Tensor, row_axes: list[int]) -> tuple[list[int], tuple, tuple]:
    if len(row_axes) != len(set(row_axes)):
        raise ValueError("row_axes repeats an axis")
    if not row_axes or len(row_axes) >= t.ndim:
        raise ValueError("row_axes must be a proper nonempty subset of axes")
    if any(not 0 <= ax < t.ndim for ax in row_axes):
        raise ValueError("row_axes out of range")
    col_axes = [ax for ax in range(t.ndim) if ax not in row_axes]
    row_shape = tuple(t.shape[ax] for ax in row_axes)
    col_shape = tuple(t.shape[ax] for ax in col_axes)
    return col_axes, row_shape, col_shape


def robust_svd(m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """SVD with a fallback to the slower but sturdier LAPACK driver."""
    try:
        return np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")


def svd_truncated(
    t: Tensor,
    row_axes: list[int],
    max_rank: int,
    rel_cutoff: float = DEFAULT_REL_CUTOFF,
) -> SvdResult:
    """Truncated SVD with the row/column split given by ``row_axes``.

    The kept rank is ``min(max_rank, #{s_i >= rel_cutoff * s_0}, full rank)``
    (at least 1). ``discarded_weight`` is the squared norm of the dropped
    singular values relative to the squared norm of all of them.
    """
    t = np.asarray(t, dtype=np.float64)
    _check_finite(t, "svd_truncated")
    if max_rank < 1:
        raise ValueError("max_rank must be >= 1")
    if rel_cutoff < 0:
        raise ValueError("rel_cutoff must be >= 0")
    col_axes, row_shape, col_shape = _split_axes(t, row_axes)
    m = t.transpose(row_axes + col_axes).reshape(
        int(np.prod(row_shape)), int(np.prod(col_shape))
    )
    u, s, vh = robust_svd(m)
    total = float(np.sum(s**2))
    if total == 0.0:
        keep = 1
    else:
        above = int(np.sum(s >= rel_cutoff * s[0]))
        keep = max(1, min(max_rank, above))
    dropped = float(np.sum(s[keep:] ** 2))
    dw = dropped / total if total > 0.0 else 0.0
    return SvdResult(
        u=u[:, :keep].reshape(row_shape + (keep,)),
        s=s[:keep].copy(),
        v=vh[:keep].reshape((keep,) + col_shape),
        discarded_weight=dw,
    )


def qr_split(t: Tensor, row_axes: list[int]) -> tuple[Tensor, Tensor]:
    """Reduced QR over the row/column split; contract(q, r) rebuilds ``t``.

    q carries the row axes plus a trailing bond axis with orthonormal
    columns, r the bond axis plus the column axes.
    """
    t = np.asarray(t, dtype=np.float64)
    _check_finite(t, "qr_split")
    col_axes, row_shape, col_shape = _split_axes(t, row_axes)
    m = t.transpose(row_axes + col_axes).reshape(
        int(np.prod(row_shape)), int(np.prod(col_shape))
    )
    q, r = np.linalg.qr(m, mode="reduced")
    k = q.shape[1]
    return q.reshape(row_shape + (k,)), r.reshape((k,) + col_shape)


def fuse(t: Tensor, groups: list[list[int]]) -> Tensor:
    """Permute axes into the given groups and merge each group into one axis."""
    t = np.asarray(t)
    order = [ax for g in groups for ax in g]
    if sorted(order) != list(range(t.ndim)):
        raise ValueError("fuse: groups must partition the axes")
    sizes = tuple(int(np.prod([t.shape[ax] for ax in g])) for g in groups)
    return np.transpose(t, order).reshape(sizes)
