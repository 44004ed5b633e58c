"""Norms, one-site expectation values and two-point correlators.

All quantities come from sandwiching one row of transfer tensors between a
top and a bottom boundary MPS. The quasi-1D window is contracted exactly
left to right with running rescaling; ratios of sandwiches cancel both the
boundary log-scales and the rescaling, so expectation values are invariant
under rescaling of the state.
"""

from __future__ import annotations

import math

import numpy as np

from .lattice import PepsState, transfer_row
from .tensor import Tensor
from .zipper import (
    DEFAULT_REL_CUTOFF,
    BoundaryMps,
    boundaries_all_rows,
    trivial_boundary,
)


class ContractionAccuracyError(RuntimeError):
    """Contraction produced a value inconsistent with a positive norm."""


def sandwich(
    top: BoundaryMps, bottom: BoundaryMps, row: list[Tensor]
) -> tuple[float, float]:
    """Contract top-MPS x transfer row x bottom-MPS to (mantissa, log)."""
    width = len(row)
    if top.width != width or bottom.width != width:
        raise ValueError("sandwich: width mismatch")
    e = np.ones((1, 1, 1))
    log = top.log_scale + bottom.log_scale
    for y in range(width):
        t_top = top.tensors[y]  # (a, u, a')
        t = row[y]  # (u, h, dn, h')
        t_bot = bottom.tensors[y]  # (b, dn, b')
        e = np.einsum("ahb,aus,uhdk,bdc->skc", e, t_top, t, t_bot, optimize=True)
        scale = float(np.max(np.abs(e)))
        if scale == 0.0:
            return 0.0, log
        e /= scale
        log += math.log(scale)
    return float(e[0, 0, 0]), log


class BoundaryEnv:
    """Shared top/bottom boundaries of a state at a given chi.

    Built lazily on first use and reused by every observable, so a sweep of
    correlators along one row pays for its boundaries once.
    """

    def __init__(
        self, state: PepsState, chi: int, rel_cutoff: float = DEFAULT_REL_CUTOFF
    ):
        if chi < 1:
            raise ValueError("chi must be >= 1")
        self.state = state
        self.chi = chi
        self.rel_cutoff = rel_cutoff
        self._tb: tuple[list[BoundaryMps], list[BoundaryMps]] | None = None
        self._transposed: BoundaryEnv | None = None

    def _boundaries(self) -> tuple[list[BoundaryMps], list[BoundaryMps]]:
        if self._tb is None:
            self._tb = boundaries_all_rows(self.state, self.chi, self.rel_cutoff)
        return self._tb

    def window(self, x: int) -> tuple[BoundaryMps, BoundaryMps]:
        top, bottom = self._boundaries()
        above = top[x - 1] if x > 0 else trivial_boundary(self.state.ly)
        below = bottom[x + 1] if x < self.state.lx - 1 else trivial_boundary(
            self.state.ly
        )
        return above, below

    def row_value(self, x: int, ops: dict[int, Tensor]) -> tuple[float, float]:
        above, below = self.window(x)
        row = transfer_row(self.state, x, ops)
        return sandwich(above, below, row)

    def expect_row_ops(self, x: int, ops: dict[int, Tensor]) -> float:
        num, log_num = self.row_value(x, ops)
        den, log_den = self.row_value(x, {})
        if den <= 0.0:
            raise ContractionAccuracyError(
                f"row {x}: non-positive norm mantissa {den}"
            )
        return num / den * math.exp(log_num - log_den)

    def norm_sq(self) -> tuple[float, float]:
        top, _ = self._boundaries()
        last = top[-1]
        return last.closure(), last.log_scale

    def transposed(self) -> "BoundaryEnv":
        if self._transposed is None:
            self._transposed = BoundaryEnv(
                self.state.transpose(), self.chi, self.rel_cutoff
            )
        return self._transposed


def _check_op(op: Tensor, d: int) -> Tensor:
    op = np.asarray(op, dtype=np.float64)
    if op.shape != (d, d):
        raise ValueError(f"operator must be {d}x{d}, got {op.shape}")
    if not np.allclose(op, op.T, atol=1e-12):
        raise ValueError("operator must be symmetric")
    return op


def norm_sq(state: PepsState, chi: int, env: BoundaryEnv | None = None):
    """Squared norm as (mantissa, log_scale); the value is
    mantissa * exp(log_scale)."""
    env = env or BoundaryEnv(state, chi)
    mantissa, log = env.norm_sq()
    if mantissa <= 0.0 and not math.isclose(mantissa, 0.0, abs_tol=1e-10):
        raise ContractionAccuracyError(f"norm mantissa {mantissa} not positive")
    return mantissa, log


def expect_site(
    state: PepsState,
    site: tuple[int, int],
    op: Tensor,
    chi: int,
    env: BoundaryEnv | None = None,
) -> float:
    op = _check_op(op, state.phys_dim)
    env = env or BoundaryEnv(state, chi)
    x, y = site
    return env.expect_row_ops(x, {y: op})


def cr_sites(lx: int, ly: int, r: int) -> tuple[tuple[int, int], tuple[int, int]]:
    """Sites of the distance-r ferromagnetic correlator along the central
    row: anchored at the central site, shifted left when r would leave the
    lattice."""
    if not 1 <= r <= ly - 1:
        raise ValueError(f"correlator distance {r} does not fit a width-{ly} row")
    x = (lx - 1) // 2
    y0 = min((ly - 1) // 2, ly - 1 - r)
    return (x, y0), (x, y0 + r)


def tfim_energy(state: PepsState, g: float, chi: int, env: BoundaryEnv | None = None):
    """Total energy -sum_bonds <sz sz> - g sum_sites <sx>."""
    from .models import SX, SZ, lattice_bonds

    env = env or BoundaryEnv(state, chi)
    total = 0.0
    for s1, s2 in lattice_bonds(state.lx, state.ly):
        total -= correlator_row(state, s1, s2, SZ, SZ, chi, env=env)
    for x in range(state.lx):
        for y in range(state.ly):
            total -= g * expect_site(state, (x, y), SX, chi, env=env)
    return total


def measure_named(
    state: PepsState,
    names: list[str],
    g: float,
    chi: int,
    env: BoundaryEnv | None = None,
) -> dict[str, float]:
    """Evaluate observables by name: C<r> (central-row sz-sz correlator at
    distance r), sz / sx (central site), energy."""
    from .models import SX, SZ

    env = env or BoundaryEnv(state, chi)
    center = ((state.lx - 1) // 2, (state.ly - 1) // 2)
    out: dict[str, float] = {}
    for name in names:
        if name.startswith("C") and name[1:].isdigit():
            a, b = cr_sites(state.lx, state.ly, int(name[1:]))
            out[name] = correlator_row(state, a, b, SZ, SZ, chi, env=env)
        elif name == "sz":
            out[name] = expect_site(state, center, SZ, chi, env=env)
        elif name == "sx":
            out[name] = expect_site(state, center, SX, chi, env=env)
        elif name == "energy":
            out[name] = tfim_energy(state, g, chi, env=env)
        else:
            raise ValueError(f"unknown observable {name!r}")
    return out


def correlator_row(
    state: PepsState,
    site_a: tuple[int, int],
    site_b: tuple[int, int],
    op_a: Tensor,
    op_b: Tensor,
    chi: int,
    env: BoundaryEnv | None = None,
) -> float:
    """Normalized two-point function of collinear sites. Column pairs go
    through the transposed lattice so only the row path exists."""
    op_a = _check_op(op_a, state.phys_dim)
    op_b = _check_op(op_b, state.phys_dim)
    env = env or BoundaryEnv(state, chi)
    (xa, ya), (xb, yb) = site_a, site_b
    if site_a == site_b:
        return env.expect_row_ops(xa, {ya: op_a @ op_b})
    if xa == xb:
        return env.expect_row_ops(xa, {ya: op_a, yb: op_b})
    if ya == yb:
        env_t = env.transposed()
        return env_t.expect_row_ops(ya, {xa: op_a, xb: op_b})
    raise ValueError(f"sites {site_a} and {site_b} are not collinear")
