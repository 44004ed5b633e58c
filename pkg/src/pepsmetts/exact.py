"""Exact dense thermal computations on small lattices.

Ground truth for everything else in the package: full eigendecomposition of
the dense Hamiltonian, cached per model spec, capped at 12 sites.
"""

from __future__ import annotations

import numpy as np

from .models import ModelSpec, dense_hamiltonian, embed_operator, site_index

ED_SITE_CAP = 12

_EIG_CACHE: dict[ModelSpec, tuple[np.ndarray, np.ndarray]] = {}

OpExpr = list[tuple[tuple[int, int], np.ndarray]]


def eigensystem(spec: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    if spec.n_sites > ED_SITE_CAP:
        raise ValueError(
            f"exact diagonalization capped at {ED_SITE_CAP} sites, got {spec.n_sites}"
        )
    if spec not in _EIG_CACHE:
        evals, evecs = np.linalg.eigh(dense_hamiltonian(spec))
        _EIG_CACHE[spec] = (evals, evecs)
    return _EIG_CACHE[spec]


def config_to_index(config, ly: int) -> int:
    """Basis index of a product configuration, matching the kron order used
    by dense_hamiltonian (site 0 most significant)."""
    config = np.asarray(config)
    n = config.size
    idx = 0
    for x in range(config.shape[0]):
        for y in range(config.shape[1]):
            idx |= int(config[x, y]) << (n - 1 - site_index((x, y), ly))
    return idx


def gibbs_expectation(spec: ModelSpec, beta: float, ops: OpExpr) -> float:
    """Tr(O exp(-beta H)) / Tr(exp(-beta H)) for a product of one-site
    operators O given as [(site, 2x2 matrix), ...] ([] for the identity)."""
    evals, evecs = eigensystem(spec)
    w = np.exp(-beta * (evals - evals[0]))
    if not ops:
        return 1.0
    op = embed_operator(ops, spec.lx, spec.ly)
    diag = np.einsum("in,ij,jn->n", evecs, op, evecs)
    return float(np.dot(w, diag) / np.sum(w))


def exact_metts_propagate(
    spec: ModelSpec, beta_half: float, config
) -> tuple[np.ndarray, float]:
    """Normalized exp(-beta H / 2)|phi_config> and the METTS weight
    p = <phi|exp(-beta H)|phi> (beta = 2 * beta_half)."""
    evals, evecs = eigensystem(spec)
    idx = config_to_index(np.asarray(config), spec.ly)
    amps = evecs[idx, :]  # <n|phi>
    shifted = np.exp(-beta_half * (evals - evals[0])) * amps
    psi = evecs @ shifted
    nrm = np.linalg.norm(psi)
    p = float(np.dot(np.exp(-2.0 * beta_half * evals), amps**2))
    if nrm == 0.0:
        raise ValueError("propagated state has zero norm")
    return psi / nrm, p


def gibbs_energy(spec: ModelSpec, beta: float) -> float:
    evals, _ = eigensystem(spec)
    w = np.exp(-beta * (evals - evals[0]))
    return float(np.dot(w, evals) / np.sum(w))
