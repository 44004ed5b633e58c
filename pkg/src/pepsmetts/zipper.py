"""Zipper contraction of PEPS rows into boundary MPSs.

A row of transfer tensors is absorbed into the boundary one tensor at a
time: at each column the carried singular-value block, the old boundary
tensor and the incoming transfer tensor are contracted into a matrix M,
which is SVD-truncated to chi. Tensors left of M are left-canonical and
those to its right are right-canonical, so each truncation is locally
optimal. The running norm is pushed through the sweep and leaves as a
single scalar, accumulated in log form to keep long lattices from over-
or underflowing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .lattice import PepsState, transfer_row
from .tensor import Tensor, robust_svd

DEFAULT_REL_CUTOFF = 1e-12


@dataclass
class ZipStep:
    y: int
    lambdas: np.ndarray
    discarded_weight: float


@dataclass
class BoundaryMps:
    """Row of rank-3 tensors (left bond, physical pair, right bond).

    The represented vector is exp(log_scale) times the tensor contraction;
    with canonical == "left"/"right" every tensor is an isometry and the
    contraction itself has unit norm.
    """

    tensors: list[Tensor]
    canonical: str = "none"
    chi: int = 1
    log_scale: float = 0.0

    @property
    def width(self) -> int:
        return len(self.tensors)

    def phys_extents(self) -> list[int]:
        return [t.shape[1] for t in self.tensors]

    def reversed(self) -> "BoundaryMps":
        flip = {"left": "right", "right": "left", "none": "none"}
        return BoundaryMps(
            [t.transpose(2, 1, 0) for t in self.tensors[::-1]],
            canonical=flip[self.canonical],
            chi=self.chi,
            log_scale=self.log_scale,
        )

    def closure(self) -> float:
        """Contract an MPS whose physical extents are all 1 to a scalar
        (excluding the exp(log_scale) prefactor)."""
        e = np.ones((1,))
        for t in self.tensors:
            if t.shape[1] != 1:
                raise ValueError("closure requires physical extents 1")
            e = e @ t[:, 0, :]
        return float(e[0])

    def overlap(self, other: "BoundaryMps") -> float:
        """Normalized overlap <self|other> / (|self| |other|)."""
        e = np.ones((1, 1))
        for a, b in zip(self.tensors, other.tensors):
            e = np.einsum("ab,apc,bpd->cd", e, a, b, optimize=True)
        val = float(e[0, 0])
        return val / (self.frob_norm() * other.frob_norm())

    def frob_norm(self) -> float:
        """Norm of the raw tensor contraction (no log_scale prefactor)."""
        e = np.ones((1, 1))
        for a in self.tensors:
            e = np.einsum("ab,apc,bpd->cd", e, a, a, optimize=True)
        return math.sqrt(max(float(e[0, 0]), 0.0))


def trivial_boundary(width: int) -> BoundaryMps:
    if width < 1:
        raise ValueError("width must be >= 1")
    return BoundaryMps(
        [np.ones((1, 1, 1)) for _ in range(width)], canonical="right", chi=1
    )


def is_isometry(t: Tensor, direction: str, tol: float = 1e-10) -> bool:
    if direction == "left":  # contract (left, phys) pair: identity on right bond
        m = t.reshape(-1, t.shape[2])
        gram = m.T @ m
    else:  # right-canonical: contract (phys, right): identity on left bond
        m = t.reshape(t.shape[0], -1)
        gram = m @ m.T
    return bool(np.allclose(gram, np.eye(gram.shape[0]), atol=tol))


def canonicalize(mps: BoundaryMps, direction: str) -> BoundaryMps:
    """QR sweep into the requested canonical form. The represented vector is
    unchanged: the overall norm moves into log_scale."""
    if direction not in ("left", "right"):
        raise ValueError("direction must be 'left' or 'right'")
    if direction == "right":
        return canonicalize(mps.reversed(), "left").reversed()
    tensors = [t.copy() for t in mps.tensors]
    for y in range(len(tensors) - 1):
        l, p, r = tensors[y].shape
        q, carry = np.linalg.qr(tensors[y].reshape(l * p, r))
        k = q.shape[1]
        tensors[y] = q.reshape(l, p, k)
        tensors[y + 1] = np.tensordot(carry, tensors[y + 1], axes=[[1], [0]])
    last = tensors[-1]
    nrm = float(np.linalg.norm(last))
    if nrm == 0.0:
        raise ValueError("cannot canonicalize a zero-norm MPS")
    tensors[-1] = last / nrm
    return BoundaryMps(
        tensors,
        canonical="left",
        chi=mps.chi,
        log_scale=mps.log_scale + math.log(nrm),
    )


def zip_row(
    boundary: BoundaryMps,
    row: list[Tensor],
    chi: int,
    rel_cutoff: float = DEFAULT_REL_CUTOFF,
    check_canonical: bool = False,
) -> tuple[BoundaryMps, list[ZipStep]]:
    """Left-to-right zip of one row of rank-4 transfer tensors
    (up, left, down, right) into a right-canonical boundary.

    Returns the left-canonical result (norm folded into log_scale) and the
    per-column singular-value records. With ``check_canonical`` every step
    asserts that tensors left of M are left-canonical and those to its
    right are right-canonical, which is what makes each truncation locally
    optimal for the mixed boundary.
    """
    if chi < 1:
        raise ValueError("chi must be >= 1")
    if boundary.width != len(row):
        raise ValueError(
            f"width mismatch: boundary {boundary.width}, row {len(row)}"
        )
    if boundary.canonical != "right":
        boundary = canonicalize(boundary, "right")

    steps: list[ZipStep] = []
    new_tensors: list[Tensor] = []
    carry = np.ones((1, 1, 1))  # (new bond, row horizontal bond, old bond)
    for y, t in enumerate(row):
        if check_canonical:
            assert all(is_isometry(s, "left") for s in new_tensors)
            assert all(is_isometry(s, "right") for s in boundary.tensors[y + 1 :])
        told = boundary.tensors[y]  # (a, u, a')
        if told.shape[1] != t.shape[0]:
            raise ValueError(
                f"column {y}: boundary physical extent {told.shape[1]} does "
                f"not match transfer up extent {t.shape[0]}"
            )
        # m[k, dn, h', a'] = carry[k, h, a] told[a, u, a'] t[u, h, dn, h']
        x = np.tensordot(carry, told, axes=[[2], [0]])  # (k, h, u, a')
        m = np.tensordot(x, t, axes=[[1, 2], [1, 0]])  # (k, a', dn, h')
        m = m.transpose(0, 2, 3, 1)  # (k, dn, h', a')
        k, dn, hr, ar = m.shape
        u, s, vh = robust_svd(m.reshape(k * dn, hr * ar))
        total = float(np.sum(s**2))
        if total == 0.0:
            raise ValueError(f"zero-norm row at column {y}")
        keep = max(1, min(chi, int(np.sum(s >= rel_cutoff * s[0]))))
        dw = float(np.sum(s[keep:] ** 2)) / total
        steps.append(ZipStep(y=y, lambdas=s[:keep].copy(), discarded_weight=dw))
        new_tensors.append(u[:, :keep].reshape(k, dn, keep))
        carry = (s[:keep, None] * vh[:keep]).reshape(keep, hr, ar)

    # after the last column the carry is a 1x1x1 scalar: the row's norm factor
    scale = float(carry[0, 0, 0])
    if scale == 0.0:
        raise ValueError("zero-norm row")
    if scale < 0.0:
        new_tensors[-1] = -new_tensors[-1]
        scale = -scale
    return (
        BoundaryMps(
            new_tensors,
            canonical="left",
            chi=chi,
            log_scale=boundary.log_scale + math.log(scale),
        ),
        steps,
    )


def _flip_horizontal(t: Tensor) -> Tensor:
    return t.transpose(0, 3, 2, 1)


def zip_row_reverse(
    boundary: BoundaryMps,
    row: list[Tensor],
    chi: int,
    rel_cutoff: float = DEFAULT_REL_CUTOFF,
) -> tuple[BoundaryMps, list[ZipStep]]:
    """Right-to-left zip starting from a left-canonical boundary; returns a
    right-canonical result."""
    if boundary.canonical != "left":
        boundary = canonicalize(boundary, "left")
    rev_row = [_flip_horizontal(t) for t in row[::-1]]
    zipped, steps = zip_row(boundary.reversed(), rev_row, chi, rel_cutoff)
    width = len(row)
    for st in steps:
        st.y = width - 1 - st.y
    return zipped.reversed(), steps[::-1]


def apply_row(
    boundary: BoundaryMps,
    row: list[Tensor],
    chi: int,
    rel_cutoff: float = DEFAULT_REL_CUTOFF,
) -> tuple[BoundaryMps, list[ZipStep]]:
    """Zip one row in the direction matching the boundary's canonical form,
    alternating sweep directions row to row."""
    if boundary.canonical == "left":
        return zip_row_reverse(boundary, row, chi, rel_cutoff)
    return zip_row(boundary, row, chi, rel_cutoff)


def _flip_vertical(t: Tensor) -> Tensor:
    return t.transpose(2, 1, 0, 3)


def step_diagnostics(kind: str, x: int, steps: list[ZipStep]) -> str:
    """One JSON line of per-column discarded weights for a zipped row."""
    return json.dumps(
        {
            "type": "zip_row",
            "boundary": kind,
            "row": x,
            "discarded": [st.discarded_weight for st in steps],
        },
        separators=(",", ":"),
    )


def boundaries_all_rows(
    state: PepsState,
    chi: int,
    rel_cutoff: float = DEFAULT_REL_CUTOFF,
    ops: dict[tuple[int, int], Tensor] | None = None,
    diagnostics: list[str] | None = None,
) -> tuple[list[BoundaryMps], list[BoundaryMps]]:
    """Top and bottom boundary MPSs for every row.

    top[x] approximates rows 0..x contracted from above, bottom[x] rows
    x..lx-1 contracted from below; each carries its own log-scale
    accumulator. ``ops`` optionally inserts per-site operators; with a
    ``diagnostics`` list, per-row discarded weights are appended to it as
    JSON lines.
    """
    ops = ops or {}
    rows = [
        transfer_row(state, x, {y: m for (sx, y), m in ops.items() if sx == x})
        for x in range(state.lx)
    ]
    top: list[BoundaryMps] = []
    bnd = trivial_boundary(state.ly)
    for x in range(state.lx):
        bnd, steps = apply_row(bnd, rows[x], chi, rel_cutoff)
        if diagnostics is not None:
            diagnostics.append(step_diagnostics("top", x, steps))
        top.append(bnd)
    bottom: list[BoundaryMps] = [None] * state.lx  # type: ignore[list-item]
    bnd = trivial_boundary(state.ly)
    for x in range(state.lx - 1, -1, -1):
        bnd, steps = apply_row(
            bnd, [_flip_vertical(t) for t in rows[x]], chi, rel_cutoff
        )
        if diagnostics is not None:
            diagnostics.append(step_diagnostics("bottom", x, steps))
        bottom[x] = bnd
    return top, bottom
