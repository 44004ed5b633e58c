"""Spin models on the open square lattice.

Only the transverse-field Ising model is wired in; its single-site field is
distributed over incident bonds by 1/coordination so that the sum of bond
terms reproduces the full Hamiltonian exactly on open boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SZ = np.array([[1.0, 0.0], [0.0, -1.0]])
SX = np.array([[0.0, 1.0], [1.0, 0.0]])
ID2 = np.eye(2)

Site = tuple[int, int]
Bond = tuple[Site, Site]

DENSE_SITE_CAP = 14


class UnsupportedModelError(ValueError):
    """Requested model is not available in this package."""


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    g: float
    lx: int
    ly: int
    d: int = 2

    def __post_init__(self):
        if self.kind not in MODEL_REGISTRY:
            raise UnsupportedModelError(
                f"model {self.kind!r} is not supported (available: "
                f"{sorted(MODEL_REGISTRY)})"
            )
        if not np.isfinite(self.g):
            raise ValueError("transverse field g must be finite")

    @property
    def n_sites(self) -> int:
        return self.lx * self.ly


def lattice_bonds(lx: int, ly: int) -> list[Bond]:
    """All NN bonds: horizontal row-by-row left-to-right, then vertical
    column-by-column top-to-bottom."""
    bonds: list[Bond] = []
    for x in range(lx):
        for y in range(ly - 1):
            bonds.append(((x, y), (x, y + 1)))
    for y in range(ly):
        for x in range(lx - 1):
            bonds.append(((x, y), (x + 1, y)))
    return bonds


def coordination(site: Site, lx: int, ly: int) -> int:
    x, y = site
    z = 0
    z += x > 0
    z += x < lx - 1
    z += y > 0
    z += y < ly - 1
    return z


def _check_bond(spec: ModelSpec, bond: Bond) -> None:
    (x1, y1), (x2, y2) = bond
    for x, y in bond:
        if not (0 <= x < spec.lx and 0 <= y < spec.ly):
            raise ValueError(f"bond {bond} leaves the {spec.lx}x{spec.ly} lattice")
    if abs(x1 - x2) + abs(y1 - y2) != 1:
        raise ValueError(f"bond {bond} is not a nearest-neighbor pair")


def bond_hamiltonian(spec: ModelSpec, bond: Bond) -> np.ndarray:
    """4x4 two-site term: -sz.sz with the field split by coordination,
    h = -sz@sz - (g/z_i) sx@1 - (g/z_j) 1@sx."""
    _check_bond(spec, bond)
    s1, s2 = bond
    z1 = coordination(s1, spec.lx, spec.ly)
    z2 = coordination(s2, spec.lx, spec.ly)
    h = -np.kron(SZ, SZ)
    h -= (spec.g / z1) * np.kron(SX, ID2)
    h -= (spec.g / z2) * np.kron(ID2, SX)
    return h


def site_index(site: Site, ly: int) -> int:
    """Row-major site ordering; site 0 is the leftmost kron factor."""
    return site[0] * ly + site[1]


def embed_operator(ops: list[tuple[Site, np.ndarray]], lx: int, ly: int) -> np.ndarray:
    """Dense 2^N x 2^N operator acting with the given matrices on the given
    sites (identity elsewhere). Sites must be distinct."""
    n = lx * ly
    if n > DENSE_SITE_CAP:
        raise ValueError(f"embed_operator: {n} sites exceeds cap {DENSE_SITE_CAP}")
    for (x, y), _ in ops:
        if not (0 <= x < lx and 0 <= y < ly):
            raise ValueError(f"site ({x},{y}) outside the {lx}x{ly} lattice")
    per_site = {site_index(s, ly): op for s, op in ops}
    if len(per_site) != len(ops):
        raise ValueError("embed_operator: repeated site")
    out = np.array([[1.0]])
    for k in range(n):
        out = np.kron(out, per_site.get(k, ID2))
    return out


def dense_hamiltonian(spec: ModelSpec) -> np.ndarray:
    """Full TFIM Hamiltonian, assembled directly from Pauli operators."""
    n = spec.n_sites
    if n > DENSE_SITE_CAP:
        raise ValueError(f"dense_hamiltonian: {n} sites exceeds cap {DENSE_SITE_CAP}")
    h = np.zeros((2**n, 2**n))
    for s1, s2 in lattice_bonds(spec.lx, spec.ly):
        h -= embed_operator([(s1, SZ), (s2, SZ)], spec.lx, spec.ly)
    for x in range(spec.lx):
        for y in range(spec.ly):
            h -= spec.g * embed_operator([((x, y), SX)], spec.lx, spec.ly)
    return h


def tfim(g: float, lx: int, ly: int) -> ModelSpec:
    return ModelSpec(kind="tfim", g=g, lx=lx, ly=ly)


MODEL_REGISTRY = {"tfim": tfim}
