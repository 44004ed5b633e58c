"""Finite open-boundary PEPS grid and its double-layer transfer tensors.

Axis convention, fixed globally: every site tensor is
(up, left, down, right, physical) with an optional trailing ancilla axis.
Boundary-facing virtual bonds have extent 1. Sites are indexed (row x from
the top, column y from the left), 0-based.

Transfer tensors fuse ket and bra virtual legs as ket*extent + bra, giving
rank-4 (up, left, down, right) objects with squared extents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import checkpoint
from .tensor import Tensor


@dataclass
class PepsState:
    lx: int
    ly: int
    tensors: list[list[Tensor]]
    phys_dim: int
    ancilla: bool = False

    def __post_init__(self):
        naxes = 6 if self.ancilla else 5
        for x in range(self.lx):
            for y in range(self.ly):
                t = self.tensors[x][y]
                if t.ndim != naxes:
                    raise ValueError(
                        f"site ({x},{y}): expected rank {naxes}, got {t.ndim}"
                    )
                if self.ancilla and t.shape[5] != t.shape[4]:
                    raise ValueError(
                        f"site ({x},{y}): ancilla extent {t.shape[5]} != "
                        f"physical extent {t.shape[4]}"
                    )
                if x == 0 and t.shape[0] != 1:
                    raise ValueError(f"site ({x},{y}): top bond must have extent 1")
                if y == 0 and t.shape[1] != 1:
                    raise ValueError(f"site ({x},{y}): left bond must have extent 1")
                if x == self.lx - 1 and t.shape[2] != 1:
                    raise ValueError(f"site ({x},{y}): bottom bond must have extent 1")
                if y == self.ly - 1 and t.shape[3] != 1:
                    raise ValueError(f"site ({x},{y}): right bond must have extent 1")
                if x + 1 < self.lx and t.shape[2] != self.tensors[x + 1][y].shape[0]:
                    raise ValueError(f"vertical bond mismatch at ({x},{y})")
                if y + 1 < self.ly and t.shape[3] != self.tensors[x][y + 1].shape[1]:
                    raise ValueError(f"horizontal bond mismatch at ({x},{y})")

    def site(self, x: int, y: int) -> Tensor:
        return self.tensors[x][y]

    def replace(self, updates: dict[tuple[int, int], Tensor]) -> "PepsState":
        """New state with the given site tensors swapped in."""
        tensors = [list(row) for row in self.tensors]
        for (x, y), t in updates.items():
            tensors[x][y] = t
        return PepsState(self.lx, self.ly, tensors, self.phys_dim, self.ancilla)

    def transpose(self) -> "PepsState":
        """Reflect the lattice across its main diagonal (x <-> y); up/left and
        down/right axis roles swap accordingly. An involution."""
        perm = (1, 0, 3, 2, 4, 5) if self.ancilla else (1, 0, 3, 2, 4)
        tensors = [
            [np.transpose(self.tensors[x][y], perm) for x in range(self.lx)]
            for y in range(self.ly)
        ]
        return PepsState(self.ly, self.lx, tensors, self.phys_dim, self.ancilla)

    def max_bond(self) -> int:
        return max(
            max(t.shape[0], t.shape[1]) for row in self.tensors for t in row
        )

    def save(self, path, extra: dict | None = None) -> None:
        sidecar = {
            "lx": self.lx,
            "ly": self.ly,
            "d": self.phys_dim,
            "ancilla": self.ancilla,
            "axis_convention": checkpoint.AXIS_CONVENTION,
        }
        if extra:
            sidecar.update(extra)
        flat = [self.tensors[x][y] for x in range(self.lx) for y in range(self.ly)]
        checkpoint.save_tensors(path, flat, sidecar)

    @classmethod
    def load(cls, path) -> tuple["PepsState", dict]:
        flat, sidecar = checkpoint.load_tensors(path)
        lx, ly = sidecar["lx"], sidecar["ly"]
        if len(flat) != lx * ly:
            raise checkpoint.CheckpointFormatError(
                f"{path}: expected {lx * ly} tensors, found {len(flat)}"
            )
        tensors = [[flat[x * ly + y] for y in range(ly)] for x in range(lx)]
        state = cls(lx, ly, tensors, sidecar["d"], sidecar.get("ancilla", False))
        return state, sidecar


def product_state(lx: int, ly: int, config, d: int) -> PepsState:
    """Bond-dimension-1 product state over basis labels; norm exactly 1."""
    config = np.asarray(config)
    if config.shape != (lx, ly):
        raise ValueError(f"config shape {config.shape} != ({lx}, {ly})")
    tensors = []
    for x in range(lx):
        row = []
        for y in range(ly):
            label = int(config[x, y])
            if not 0 <= label < d:
                raise ValueError(f"label {label} at ({x},{y}) outside [0, {d})")
            t = np.zeros((1, 1, 1, 1, d))
            t[0, 0, 0, 0, label] = 1.0
            row.append(t)
        tensors.append(row)
    return PepsState(lx, ly, tensors, d)


def transfer_tensor(site: Tensor, op: Tensor | None = None) -> Tensor:
    """Ket-bra contraction of one site tensor over its physical (and
    ancilla) axes; with ``op``, the operator sits between ket and bra."""
    ket = site
    if op is not None:
        op = np.asarray(op)
        if op.shape != (site.shape[4], site.shape[4]):
            raise ValueError(
                f"operator shape {op.shape} does not match physical extent "
                f"{site.shape[4]}"
            )
        ket = np.moveaxis(np.tensordot(site, op, axes=[[4], [0]]), -1, 4)
    if site.ndim == 6:
        t = np.einsum("uldrpa,ULDRpa->uUlLdDrR", ket, site)
    else:
        t = np.einsum("uldrp,ULDRp->uUlLdDrR", ket, site)
    u, U, l, L, dn, DN, r, R = t.shape
    return t.reshape(u * U, l * L, dn * DN, r * R)


def transfer_row(state: PepsState, x: int, ops: dict[int, Tensor] | None = None):
    """Transfer tensors for row x, with optional operator insertions keyed
    by column."""
    ops = ops or {}
    return [transfer_tensor(state.site(x, y), ops.get(y)) for y in range(state.ly)]


def apply_projector(state: PepsState, site: tuple[int, int], label: int) -> PepsState:
    """Project the physical axis onto basis state ``label``; the axis is kept
    with extent 1 so the grid stays uniform for boundary code."""
    x, y = site
    t = state.site(x, y)
    d = t.shape[4]
    if not 0 <= label < d:
        raise ValueError(f"label {label} outside [0, {d})")
    proj = t[:, :, :, :, label : label + 1]
    return state.replace({(x, y): proj.copy()})
