"""Sequential projective sampling of a PEPS in the computational basis.

Sites are measured row after row, left to right. Bottom boundaries are
built once per sweep from the unmeasured state; the top boundary is zipped
forward incrementally as rows fill with projectors. Within a row, right
environments are precomputed so each site costs one window contraction per
outcome.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .evolution import EvolutionSchedule, NtuOpts, NtuReport, evolve
from .lattice import PepsState, product_state, transfer_tensor
from .models import ModelSpec
from .observables import BoundaryEnv, ContractionAccuracyError, measure_named
from .tensor import Tensor
from .zipper import BoundaryMps, apply_row, trivial_boundary

PROB_CLAMP = 1e-8
MASS_FLOOR = 1e-12


class DegenerateStateError(RuntimeError):
    """All outcome probabilities vanished at a site."""


class ReplayableRng:
    """Seeded uniform-draw generator with an advance counter, so a sample
    can be replayed exactly from (seed, draws)."""

    def __init__(self, seed: int, draws: int = 0):
        self.seed = int(seed)
        self.draws = 0
        self._gen = np.random.Generator(np.random.PCG64(self.seed))
        if draws:
            self.skip(draws)

    def uniform(self) -> float:
        self.draws += 1
        return float(self._gen.random())

    def skip(self, draws: int) -> None:
        # one uniform double consumes one 64-bit word of PCG64
        self._gen.bit_generator.advance(draws)
        self.draws += draws


@dataclass
class SampleResult:
    config: np.ndarray
    log_prob: float
    conditionals: list[list[float]]
    seed: int | None = None
    draws_before: int = 0
    draws_after: int = 0

    def config_strings(self) -> list[str]:
        return ["".join(str(int(v)) for v in row) for row in self.config]


def _projected_transfers(site: Tensor, d: int) -> list[Tensor]:
    """Transfer tensors with each basis projector inserted; built from the
    ket slices, so each is an outer product of a single layer."""
    out = []
    for label in range(d):
        a = site[:, :, :, :, label]
        t = np.einsum("uldr,ULDR->uUlLdDrR", a, a)
        u, uu, l, ll, dn, dd, r, rr = t.shape
        out.append(t.reshape(u * uu, l * ll, dn * dd, r * rr))
    return out


class Sampler:
    """Reusable sampler over one fixed state; boundary work is paid once."""

    def __init__(self, state: PepsState, chi: int, single_layer: bool = False):
        if state.ancilla:
            raise ValueError("sampling a purification is not defined here")
        self.state = state
        self.chi = chi
        self.single_layer = single_layer
        self.d = state.phys_dim
        self.rows = [
            [transfer_tensor(state.site(x, y)) for y in range(state.ly)]
            for x in range(state.lx)
        ]
        self.projected = [
            [_projected_transfers(state.site(x, y), self.d) for y in range(state.ly)]
            for x in range(state.lx)
        ]
        self.proj_stack = [
            [np.stack(self.projected[x][y]) for y in range(state.ly)]
            for x in range(state.lx)
        ]
        bottom: list[BoundaryMps] = [trivial_boundary(state.ly)] * state.lx
        bnd = trivial_boundary(state.ly)
        for x in range(state.lx - 1, -1, -1):
            bottom[x] = bnd
            flipped = [t.transpose(2, 1, 0, 3) for t in self.rows[x]]
            bnd, _ = apply_row(bnd, flipped, chi)
        self.bottom = bottom  # bottom[x] covers rows x+1 .. lx-1

    def _right_envs(self, top, bot, row_x):
        width = self.state.ly
        envs = [None] * (width + 1)
        envs[width] = np.ones((1, 1, 1))
        for y in range(width - 1, -1, -1):
            t_top = top.tensors[y]
            t = self.rows[row_x][y]
            t_bot = bot.tensors[y]
            z = np.tensordot(t_top, envs[y + 1], axes=[[2], [0]])  # (a,u,h',b')
            z = np.tensordot(t, z, axes=[[0, 3], [1, 2]])  # (h,dn,a,b')
            z = np.tensordot(z, t_bot, axes=[[1, 3], [1, 2]])  # (h,a,b)
            z = z.transpose(1, 0, 2)  # (a, h, b)
            scale = float(np.max(np.abs(z)))
            if scale > 0:
                z = z / scale
            envs[y] = z
        return envs

    def _fused_single_layer(self, mps: BoundaryMps) -> BoundaryMps:
        tensors = []
        for t in mps.tensors:
            f = np.einsum("lpr,LPR->lLpPrR", t, t)
            l, ll, p, pp, r, rr = f.shape
            tensors.append(f.reshape(l * ll, p * pp, r * rr))
        return BoundaryMps(
            tensors, canonical=mps.canonical, chi=mps.chi**2,
            log_scale=2.0 * mps.log_scale,
        )

    def sample(self, rng: ReplayableRng) -> SampleResult:
        state = self.state
        d = self.d
        config = np.zeros((state.lx, state.ly), dtype=np.int64)
        conditionals: list[list[float]] = []
        log_prob = 0.0
        draws_before = rng.draws
        top = trivial_boundary(state.ly)
        top_single = trivial_boundary(state.ly) if self.single_layer else None

        for x in range(state.lx):
            if self.single_layer:
                top = self._fused_single_layer(top_single)
            bot = self.bottom[x]
            right = self._right_envs(top, bot, x)
            left = np.ones((1, 1, 1))
            measured_row: list[Tensor] = []
            for y in range(state.ly):
                t_top = top.tensors[y]
                t_bot = bot.tensors[y]
                # all outcome windows in one batched contraction
                z = np.tensordot(left, t_top, axes=[[0], [0]])  # (h, b, u, a')
                z = np.tensordot(
                    z, self.proj_stack[x][y], axes=[[0, 2], [2, 1]]
                )  # (b, a', i, dn, h')
                z = np.tensordot(z, t_bot, axes=[[0, 3], [0, 1]])  # (a', i, h', b')
                vals = np.tensordot(
                    z, right[y + 1], axes=[[0, 2, 3], [0, 1, 2]]
                )  # (i,)
                mass = float(np.sum(vals))
                abs_mass = float(np.sum(np.abs(vals)))
                if abs_mass <= 0.0 or mass < MASS_FLOOR * abs_mass:
                    raise DegenerateStateError(
                        f"site ({x},{y}): outcome probability mass {mass} "
                        f"below floor"
                    )
                probs = vals / mass
                if np.any(probs < -PROB_CLAMP):
                    raise ContractionAccuracyError(
                        f"site ({x},{y}): conditional {probs.min()} below "
                        f"-{PROB_CLAMP}"
                    )
                probs = np.clip(probs, 0.0, None)
                probs /= probs.sum()
                u = rng.uniform()
                label = int(np.searchsorted(np.cumsum(probs), u))
                label = min(label, d - 1)
                config[x, y] = label
                conditionals.append([float(p) for p in probs])
                log_prob += math.log(probs[label]) if probs[label] > 0 else -math.inf
                measured_row.append(self.projected[x][y][label])
                left = np.ascontiguousarray(z[:, label])  # (a', h', b')
                scale = float(np.max(np.abs(left)))
                if scale > 0:
                    left = left / scale
            if x == state.lx - 1:
                break
            if self.single_layer:
                kets = [
                    state.site(x, y)[:, :, :, :, config[x, y]]
                    for y in range(state.ly)
                ]
                top_single, _ = apply_row(top_single, kets, self.chi)
            else:
                top, _ = apply_row(top, measured_row, self.chi)
        return SampleResult(
            config=config,
            log_prob=log_prob,
            conditionals=conditionals,
            seed=getattr(rng, "seed", None),
            draws_before=draws_before,
            draws_after=rng.draws,
        )


def sample_configuration(
    state: PepsState, chi: int, rng: ReplayableRng, single_layer: bool = False
) -> SampleResult:
    return Sampler(state, chi, single_layer=single_layer).sample(rng)


def metts_step(
    prev_config,
    spec: ModelSpec,
    schedule: EvolutionSchedule,
    max_d: int,
    chi: int,
    rng: ReplayableRng,
    observables_spec: list[str],
    chi_sample: int | None = None,
    opts: NtuOpts | None = None,
) -> tuple[dict[str, float], SampleResult, list[NtuReport]]:
    """One METTS iteration: evolve the collapsed product state by beta/2,
    measure, then draw the next configuration from the evolved state."""
    state = product_state(spec.lx, spec.ly, np.asarray(prev_config), spec.d)
    evolved, reports = evolve(state, spec, schedule, max_d, opts)
    env = BoundaryEnv(evolved, chi)
    values = measure_named(evolved, observables_spec, spec.g, chi, env=env)
    result = sample_configuration(evolved, chi_sample or chi, rng)
    return values, result, reports
