"""Ancilla-based thermal purification: the deterministic benchmark method.

Every site carries a sixth (ancilla) axis of the same extent as the
physical one. Gates act on the physical legs only; expectation values
trace the ancillas, which the transfer-tensor contraction does for free.
The evolution reuses the NTU machinery unchanged (the ancilla rides along
fused into the physical axis and is unfused on exit).
"""

from __future__ import annotations

import numpy as np

from .evolution import EvolutionSchedule, NtuOpts, NtuReport, evolve
from .lattice import PepsState
from .models import ModelSpec
from .observables import BoundaryEnv, correlator_row, expect_site
from .tensor import Tensor


def init_infinite_temperature(lx: int, ly: int, d: int = 2) -> PepsState:
    """Product over sites of sum_i |sigma_i, sigma_i> (unnormalized);
    norm^2 is d^(lx*ly)."""
    site = np.eye(d).reshape(1, 1, 1, 1, d, d)
    tensors = [[site.copy() for _ in range(ly)] for _ in range(lx)]
    return PepsState(lx, ly, tensors, d, ancilla=True)


def evolve_purification(
    state: PepsState,
    spec: ModelSpec,
    schedule: EvolutionSchedule,
    max_d: int,
    opts: NtuOpts | None = None,
) -> tuple[PepsState, list[NtuReport]]:
    if not state.ancilla:
        raise ValueError("evolve_purification expects an ancilla-carrying state")
    return evolve(state, spec, schedule, max_d, opts)


def expect_purified(
    state: PepsState,
    site: tuple[int, int],
    op: Tensor,
    chi: int,
    env: BoundaryEnv | None = None,
) -> float:
    """Thermal one-site expectation value, ancillas traced out."""
    return expect_site(state, site, op, chi, env=env)


def correlator_purified(
    state: PepsState,
    site_a: tuple[int, int],
    site_b: tuple[int, int],
    op_a: Tensor,
    op_b: Tensor,
    chi: int,
    env: BoundaryEnv | None = None,
) -> float:
    return correlator_row(state, site_a, site_b, op_a, op_b, chi, env=env)
