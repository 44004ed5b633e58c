"""Second-order Suzuki-Trotter imaginary-time evolution with neighborhood
tensor update (NTU) bond truncation.

A two-site gate exp(-dtau h) is split by SVD into a pair of rank-3 tensors
and absorbed into the bond's site tensors, growing the bond from D to r*D.
The bond is truncated back by minimizing the Frobenius distance between the
truncated and the gate-absorbed cluster, where the cluster is the two
updated sites plus all of their nearest neighbors; every leg leaving the
cluster is traced ket-to-bra. All neighbor contractions are Gram matrices,
so the effective metric of the least-squares problem is non-negative by
construction, and the alternating solves stay stable.

Index conventions inside this module, for a horizontal bond:
    a[u, l, d, c, p]   left site,  c = updated bond
    b[v, c, w, r, q]   right site
    n_left[l, l'], n_right[r, r']          single-neighbor Gram matrices
    top[u, v, u', v'], bottom[d, w, d', w'] corner-pair Gram tensors
    (the two top neighbors are mutually contracted, likewise the bottom two)

Vertical bonds are updated by transposing the lattice; ancilla legs ride
along fused into the physical axis and are unfused on exit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import PepsState
from .models import Bond, ModelSpec, bond_hamiltonian, lattice_bonds
from .tensor import Tensor, robust_svd

GATE_SPLIT_CUTOFF = 1e-14


@dataclass
class TwoSiteGate:
    """exp(-dtau h_bond), whole and as a rank-r split pair.

    left has axes (out, in, r); right has axes (r, out, in); contracting
    left with right over r rebuilds full (with row index (out1, out2)).
    """

    full: Tensor
    left: Tensor
    right: Tensor
    dtau: float

    @property
    def rank(self) -> int:
        return self.left.shape[2]

    @property
    def phys_dim(self) -> int:
        return self.left.shape[0]


@dataclass
class EvolutionSchedule:
    beta_half: float
    dtau: float
    bond_order: list[Bond]
    steps: int


@dataclass
class NtuOpts:
    max_sweeps: int = 100
    tol: float = 1e-12
    pinv_cutoff: float = 1e-10
    # below this relative discarded weight the gauged SVD split is exact
    # and the least-squares stage is skipped
    exact_init_dw: float = 1e-24


@dataclass
class NtuReport:
    bond: Bond
    delta: float
    iters: int
    fallback: bool = False
    history: list[float] = field(default_factory=list)


def make_gate(h_bond: Tensor, dtau: float) -> TwoSiteGate:
    """Gate from a symmetric bond Hamiltonian via eigendecomposition, split
    by SVD grouping (site-1 out, site-1 in) against (site-2 out, site-2 in)."""
    h_bond = np.asarray(h_bond, dtype=np.float64)
    if h_bond.ndim != 2 or h_bond.shape[0] != h_bond.shape[1]:
        raise ValueError("h_bond must be a square matrix")
    if not np.allclose(h_bond, h_bond.T, atol=1e-12):
        raise ValueError("h_bond must be symmetric")
    if dtau < 0:
        raise ValueError("dtau must be >= 0")
    d = int(round(math.sqrt(h_bond.shape[0])))
    if d * d != h_bond.shape[0]:
        raise ValueError("h_bond extent is not a perfect square")
    evals, evecs = np.linalg.eigh(h_bond)
    full = (evecs * np.exp(-dtau * evals)) @ evecs.T
    full = 0.5 * (full + full.T)
    m = full.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
    u, s, vh = robust_svd(m)
    r = max(1, int(np.sum(s >= GATE_SPLIT_CUTOFF * s[0])))
    left = (u[:, :r] * np.sqrt(s[:r])).reshape(d, d, r)
    right = (np.sqrt(s[:r, None]) * vh[:r]).reshape(r, d, d)
    return TwoSiteGate(full=full, left=left, right=right, dtau=dtau)


def lift_gate_ancilla(gate: TwoSiteGate, anc: int) -> TwoSiteGate:
    """Extend a gate to a fused (physical * ancilla) axis, acting as the
    identity on the ancilla."""
    if anc == 1:
        return gate
    d = gate.phys_dim
    eye = np.eye(anc)
    left = np.einsum("oir,ab->oaibr", gate.left, eye).reshape(d * anc, d * anc, -1)
    right = np.einsum("roi,ab->roaib", gate.right, eye).reshape(-1, d * anc, d * anc)
    full = np.tensordot(left, right, axes=[[2], [0]])  # (o1, i1, o2, i2)
    de = d * anc
    full = full.transpose(0, 2, 1, 3).reshape(de * de, de * de)
    return TwoSiteGate(full=full, left=left, right=right, dtau=gate.dtau)


def make_schedule(
    spec: ModelSpec, beta_half: float, dtau: float = 0.01
) -> EvolutionSchedule:
    """Schedule with dtau adjusted downward so steps * dtau == beta_half."""
    if beta_half < 0 or dtau <= 0:
        raise ValueError("beta_half must be >= 0 and dtau > 0")
    bonds = lattice_bonds(spec.lx, spec.ly)
    if beta_half == 0.0:
        return EvolutionSchedule(0.0, dtau, bonds, 0)
    steps = max(1, int(math.ceil(beta_half / dtau - 1e-12)))
    return EvolutionSchedule(beta_half, beta_half / steps, bonds, steps)


# ---------------------------------------------------------------------------
# cluster environments


def _gram_single(t: Tensor | None, extent: int, axis: int) -> Tensor:
    """Ket-bra contraction of one neighbor over everything but the leg
    facing the updated bond; identity for an absent neighbor."""
    if t is None:
        return np.eye(extent)
    m = np.moveaxis(t, axis, 0).reshape(t.shape[axis], -1)
    return m @ m.T


def _gram_pair(
    left: Tensor | None, right: Tensor | None, axis: int, ext_l: int, ext_r: int
) -> Tensor:
    """Gram tensor of two horizontally adjacent neighbors contracted over
    their mutual bond, open only on the legs facing the updated sites:
    output (f_left, f_right, f_left', f_right')."""
    if left is None and right is None:
        return np.einsum("ac,bd->abcd", np.eye(ext_l), np.eye(ext_r))
    assert left is not None and right is not None, "corner pair must be whole"
    lm = np.moveaxis(left, axis, 0)  # (face, rest...) with original order kept
    rm = np.moveaxis(right, axis, 0)
    r_pos = 3 if axis != 3 else 4  # left tensor's right leg after the move
    l_pos = 1 if axis == 0 else 2  # right tensor's left leg after the move
    w = np.tensordot(lm, rm, axes=[[r_pos], [l_pos]])
    w = np.moveaxis(w, lm.ndim - 1, 1)  # (f_left, f_right, outer legs...)
    m = w.reshape(w.shape[0] * w.shape[1], -1)
    g = m @ m.T
    return g.reshape(w.shape[0], w.shape[1], w.shape[0], w.shape[1])


def _neighbor(state: PepsState, x: int, y: int) -> Tensor | None:
    if 0 <= x < state.lx and 0 <= y < state.ly:
        return state.site(x, y)
    return None


@dataclass
class _BondEnv:
    n_left: Tensor
    n_right: Tensor
    top: Tensor
    bottom: Tensor


def _bond_env(state: PepsState, x: int, y: int) -> _BondEnv:
    a = state.site(x, y)
    b = state.site(x, y + 1)
    return _BondEnv(
        n_left=_gram_single(_neighbor(state, x, y - 1), a.shape[1], 3),
        n_right=_gram_single(_neighbor(state, x, y + 2), b.shape[3], 1),
        top=_gram_pair(
            _neighbor(state, x - 1, y), _neighbor(state, x - 1, y + 1),
            2, a.shape[0], b.shape[0],
        ),
        bottom=_gram_pair(
            _neighbor(state, x + 1, y), _neighbor(state, x + 1, y + 1),
            0, a.shape[2], b.shape[2],
        ),
    )


# ---------------------------------------------------------------------------
# alternating least squares


def _side_right(env: _BondEnv, b1: Tensor, b2: Tensor) -> Tensor:
    """Mixed Gram of two right-site candidates through n_right:
    out[c1, c2, v1, v2, w1, w2]."""
    t = np.tensordot(b1, env.n_right, axes=[[3], [0]])  # (v, c, w, q, r')
    out = np.tensordot(t, b2, axes=[[4, 3], [3, 4]])  # (v, c, w, V, C, W)
    return out.transpose(1, 4, 0, 3, 2, 5)


def _side_left(env: _BondEnv, a1: Tensor, a2: Tensor) -> Tensor:
    """Mixed Gram of two left-site candidates through n_left:
    out[c1, c2, u1, u2, d1, d2]."""
    t = np.tensordot(a1, env.n_left, axes=[[1], [0]])  # (u, d, c, p, l')
    out = np.tensordot(t, a2, axes=[[4, 3], [1, 4]])  # (u, d, c, U, D, C)
    return out.transpose(2, 5, 0, 3, 1, 4)


def _couple_for_left(env: _BondEnv, side: Tensor) -> Tensor:
    """Attach the corner pairs to a right-side Gram, leaving the left
    site's legs open: out[u1, u2, d1, d2, c1, c2]."""
    z = np.tensordot(env.top, side, axes=[[1, 3], [2, 3]])  # (u, U, c, C, w, W)
    z = np.tensordot(z, env.bottom, axes=[[4, 5], [1, 3]])  # (u, U, c, C, d, D)
    return z.transpose(0, 1, 4, 5, 2, 3)


def _couple_for_right(env: _BondEnv, side: Tensor) -> Tensor:
    """Attach the corner pairs to a left-side Gram, leaving the right
    site's legs open: out[v1, v2, w1, w2, c1, c2]."""
    z = np.tensordot(env.top, side, axes=[[0, 2], [2, 3]])  # (v, V, c, C, d, D)
    z = np.tensordot(z, env.bottom, axes=[[4, 5], [0, 2]])  # (v, V, c, C, w, W)
    return z.transpose(0, 1, 4, 5, 2, 3)


def _metric_matrix(coupled: Tensor) -> Tensor:
    """Reshape a coupled tensor [x1,x2,y1,y2,c1,c2] into a symmetric matrix
    over the fused (x, y, c) block."""
    n = coupled.shape[0] * coupled.shape[2] * coupled.shape[4]
    m = coupled.transpose(0, 2, 4, 1, 3, 5).reshape(n, n)
    return 0.5 * (m + m.T)


def _apply_block(
    kmat: Tensor, nmat: Tensor, t: Tensor, block_axes: list[int], outer_axis: int
) -> Tensor:
    """Apply (kmat on the fused block axes) x (nmat on the outer leg) x
    identity on phys to a 5-axis site tensor."""
    order = block_axes + [outer_axis, 4]
    z = t.transpose(order)
    shp = z.shape
    z = z.reshape(shp[0] * shp[1] * shp[2], shp[3], shp[4])
    z = np.tensordot(kmat, z, axes=[[1], [0]])
    z = np.tensordot(z, nmat, axes=[[1], [0]]).transpose(0, 2, 1)
    z = z.reshape(shp)
    inv = np.argsort(order)
    return z.transpose(inv)


# block axis orders for the two solves: (u, d, c) of a[u,l,d,c,p] and
# (v, w, c) of b[v,c,w,r,q], matching _metric_matrix's fusion
_A_BLOCK = [0, 2, 3]
_B_BLOCK = [0, 2, 1]


def _pinv_psd(m: Tensor, rel_cutoff: float) -> Tensor:
    evals, evecs = np.linalg.eigh(0.5 * (m + m.T))
    top = float(evals[-1]) if evals.size else 0.0
    if top <= 0.0:
        return np.zeros_like(m)
    inv = np.where(evals > rel_cutoff * top, 1.0 / np.maximum(np.abs(evals), 1e-300), 0.0)
    return (evecs * inv) @ evecs.T


def _absorb_gate(a: Tensor, b: Tensor, gate: TwoSiteGate) -> tuple[Tensor, Tensor]:
    """Contract the split gate into the two site tensors of a horizontal
    bond; the bond index becomes (old bond, gate rank) fused."""
    u1, l1, d1, c, p = a.shape
    v, _, w, r2, q = b.shape
    r = gate.rank
    ag = np.tensordot(a, gate.left, axes=[[4], [1]])  # (u,l,d,c,o,r)
    ag = ag.transpose(0, 1, 2, 3, 5, 4).reshape(u1, l1, d1, c * r, p)
    bg = np.tensordot(b, gate.right, axes=[[4], [2]])  # (v,c,w,r2,rg,o)
    bg = bg.transpose(0, 1, 4, 2, 3, 5).reshape(v, c * r, w, r2, q)
    return ag, bg


def _svd_init(ag: Tensor, bg: Tensor, max_d: int) -> tuple[Tensor, Tensor, float]:
    """QR-orthogonalize the environment-facing legs, then split the bond
    matrix by truncated SVD. Also returns the relative discarded weight of
    that split; ~0 means the truncation is exact in any metric."""
    u1, l1, d1, cc, p = ag.shape
    v, _, w, r2, q = bg.shape
    qa, ra = np.linalg.qr(ag.reshape(u1 * l1 * d1, cc * p))
    ra = ra.reshape(-1, cc, p)
    qb, rb = np.linalg.qr(bg.transpose(0, 2, 3, 1, 4).reshape(v * w * r2, cc * q))
    rb = rb.reshape(-1, cc, q)
    theta = np.tensordot(ra, rb, axes=[[1], [1]])  # (ka, p, kb, q)
    ka, _, kb, _ = theta.shape
    uu, s, vh = robust_svd(theta.reshape(ka * p, kb * q))
    keep = max(1, min(max_d, int(np.sum(s >= 1e-14 * s[0]))))
    total = float(np.sum(s**2))
    dw = float(np.sum(s[keep:] ** 2)) / total if total > 0 else 0.0
    us = (uu[:, :keep] * np.sqrt(s[:keep])).reshape(ka, p, keep)
    vs = (np.sqrt(s[:keep, None]) * vh[:keep]).reshape(keep, kb, q)
    a0 = np.tensordot(qa.reshape(u1, l1, d1, -1), us, axes=[[3], [0]])
    a0 = a0.transpose(0, 1, 2, 4, 3)  # (u, l, d, c, p)
    b0 = np.tensordot(vs, qb.reshape(v, w, r2, -1), axes=[[1], [3]])
    b0 = b0.transpose(2, 0, 3, 4, 1)  # (v, c, w, r, q)
    return a0, b0, dw


def _ntu_horizontal(
    state: PepsState, x: int, y: int, gate: TwoSiteGate, max_d: int, opts: NtuOpts
) -> tuple[PepsState, NtuReport]:
    bond: Bond = ((x, y), (x, y + 1))
    a = state.site(x, y)
    b = state.site(x, y + 1)
    ag, bg = _absorb_gate(a, b, gate)
    if ag.shape[3] <= max_d:
        new = state.replace({(x, y): ag, (x, y + 1): bg})
        return new, NtuReport(bond=bond, delta=0.0, iters=0)

    a0, b0, init_dw = _svd_init(ag, bg, max_d)
    if init_dw <= opts.exact_init_dw:
        new = state.replace({(x, y): a0, (x, y + 1): b0})
        return new, NtuReport(bond=bond, delta=math.sqrt(init_dw), iters=0)

    env = _bond_env(state, x, y)

    def rhs_for_left(b_t: Tensor) -> Tensor:
        """Gradient target <d/dA', Psi_G> for the current right tensor."""
        mixed = _couple_for_left(env, _side_right(env, bg, b_t))
        out = np.tensordot(ag_nl, mixed, axes=[[0, 2, 3], [0, 2, 4]])
        return out.transpose(2, 0, 3, 4, 1)  # (U, L, D, c, p)

    def rhs_for_right(a_t: Tensor) -> Tensor:
        mixed = _couple_for_right(env, _side_left(env, ag, a_t))
        out = np.tensordot(bg_nr, mixed, axes=[[0, 2, 1], [0, 2, 4]])
        return out.transpose(2, 4, 3, 0, 1)  # (V, c, W, R, q)

    ag_nl = np.tensordot(ag, env.n_left, axes=[[1], [0]])  # (u, d, C, p, L)
    ag_nl = ag_nl.transpose(0, 4, 1, 2, 3)  # (u, L, d, C, p)
    bg_nr = np.tensordot(bg, env.n_right, axes=[[3], [0]])  # (v, C, w, q, R)
    bg_nr = bg_nr.transpose(0, 1, 2, 4, 3)  # (v, C, w, R, q)
    mixed_gg = _couple_for_left(env, _side_right(env, bg, bg))
    rhs_gg = np.tensordot(ag_nl, mixed_gg, axes=[[0, 2, 3], [0, 2, 4]])
    norm_g = float(np.dot(rhs_gg.transpose(2, 0, 3, 4, 1).ravel(), ag.ravel()))
    if norm_g <= 0.0 or not np.isfinite(norm_g):
        raise ValueError(f"bond {bond}: gate-absorbed cluster has bad norm {norm_g}")

    a_cur, b_cur = a0, b0
    nl_inv = _pinv_psd(env.n_left, opts.pinv_cutoff)
    nr_inv = _pinv_psd(env.n_right, opts.pinv_cutoff)

    def dist_sq(a_t: Tensor, b_t: Tensor, kmat: Tensor, rhs: Tensor) -> float:
        """norm_g - 2 <Psi', Psi_G> + |Psi'|^2 from the left-solve pieces."""
        cross = float(np.dot(a_t.ravel(), rhs.ravel()))
        own = float(
            np.dot(a_t.ravel(), _apply_block(kmat, env.n_left, a_t, _A_BLOCK, 1).ravel())
        )
        return norm_g - 2.0 * cross + own

    kmat0 = _metric_matrix(_couple_for_left(env, _side_right(env, b_cur, b_cur)))
    best = dist_sq(a_cur, b_cur, kmat0, rhs_for_left(b_cur))
    best_a, best_b = a_cur, b_cur
    history = [math.sqrt(max(best, 0.0) / norm_g)]
    fallback = False
    prev = best
    iters = 0
    for sweep in range(opts.max_sweeps):
        iters = sweep + 1
        # solve for the left tensor with the right one fixed
        kmat = _metric_matrix(_couple_for_left(env, _side_right(env, b_cur, b_cur)))
        rhs = rhs_for_left(b_cur)
        a_new = _apply_block(_pinv_psd(kmat, opts.pinv_cutoff), nl_inv, rhs, _A_BLOCK, 1)
        if not np.all(np.isfinite(a_new)):
            fallback = True
            break
        a_cur = a_new
        # solve for the right tensor with the left one fixed
        kmat_b = _metric_matrix(_couple_for_right(env, _side_left(env, a_cur, a_cur)))
        rhs_b = rhs_for_right(a_cur)
        b_new = _apply_block(_pinv_psd(kmat_b, opts.pinv_cutoff), nr_inv, rhs_b, _B_BLOCK, 3)
        if not np.all(np.isfinite(b_new)):
            fallback = True
            break
        b_cur = b_new
        cross = float(np.dot(b_cur.ravel(), rhs_b.ravel()))
        own = float(
            np.dot(
                b_cur.ravel(),
                _apply_block(kmat_b, env.n_right, b_cur, _B_BLOCK, 3).ravel(),
            )
        )
        cur = norm_g - 2.0 * cross + own
        history.append(math.sqrt(max(cur, 0.0) / norm_g))
        if cur <= best:
            best, best_a, best_b = cur, a_cur, b_cur
        if abs(prev - cur) < opts.tol * norm_g:
            break
        prev = cur

    if fallback:
        best_a, best_b = a0, b0
        kmat0 = _metric_matrix(_couple_for_left(env, _side_right(env, best_b, best_b)))
        best = dist_sq(best_a, best_b, kmat0, rhs_for_left(best_b))
    delta = math.sqrt(max(best, 0.0) / norm_g)
    new = state.replace({(x, y): best_a, (x, y + 1): best_b})
    return new, NtuReport(
        bond=bond, delta=delta, iters=iters, fallback=fallback, history=history
    )


def _fuse_ancilla(state: PepsState) -> PepsState:
    tensors = [
        [
            t.reshape(t.shape[:4] + (t.shape[4] * t.shape[5],))
            for t in row
        ]
        for row in state.tensors
    ]
    return PepsState(state.lx, state.ly, tensors, state.phys_dim**2, ancilla=False)


def _unfuse_ancilla(state: PepsState, d: int) -> PepsState:
    tensors = [
        [t.reshape(t.shape[:4] + (d, d)) for t in row] for row in state.tensors
    ]
    return PepsState(state.lx, state.ly, tensors, d, ancilla=True)


def ntu_truncate(
    state: PepsState,
    bond: Bond,
    gate: TwoSiteGate,
    max_d: int,
    opts: NtuOpts | None = None,
) -> tuple[PepsState, NtuReport]:
    """Apply a two-site gate to a nearest-neighbor bond and truncate the
    bond back to max_d by the neighborhood least-squares fit."""
    opts = opts or NtuOpts()
    (x1, y1), (x2, y2) = bond
    if (x1, y1) > (x2, y2):
        (x1, y1), (x2, y2) = (x2, y2), (x1, y1)
    if state.ancilla:
        fused = _fuse_ancilla(state)
        lifted = lift_gate_ancilla(gate, state.phys_dim)
        out, report = ntu_truncate(fused, ((x1, y1), (x2, y2)), lifted, max_d, opts)
        return _unfuse_ancilla(out, state.phys_dim), report
    if gate.phys_dim != state.phys_dim:
        raise ValueError(
            f"gate dimension {gate.phys_dim} != physical dimension {state.phys_dim}"
        )
    if x1 == x2 and y2 == y1 + 1:
        return _ntu_horizontal(state, x1, y1, gate, max_d, opts)
    if y1 == y2 and x2 == x1 + 1:
        flipped, report = _ntu_horizontal(
            state.transpose(), y1, x1, gate, max_d, opts
        )
        report.bond = ((x1, y1), (x2, y2))
        return flipped.transpose(), report
    raise ValueError(f"bond {bond} is not a nearest-neighbor pair")


def bond_metric_matrix(state: PepsState, bond: Bond) -> Tensor:
    """Dense cluster metric for the left-site solve of a horizontal bond,
    over the fused (u, l, d, c, p) index; exposed for non-negativity
    checks."""
    (x1, y1), (x2, y2) = bond
    if not (x1 == x2 and y2 == y1 + 1):
        raise ValueError("bond_metric_matrix expects a horizontal bond")
    env = _bond_env(state, x1, y1)
    b = state.site(x2, y2)
    coupled = _couple_for_left(env, _side_right(env, b, b))  # (u,U,d,D,c,C)
    a = state.site(x1, y1)
    p = a.shape[4]
    m = np.einsum(
        "uUdDcC,lL,pP->uldcpULDCP",
        coupled, env.n_left, np.eye(p), optimize=True,
    )
    n = int(np.prod(a.shape))
    return m.reshape(n, n)


def evolve(
    state: PepsState,
    spec: ModelSpec,
    schedule: EvolutionSchedule,
    max_d: int,
    opts: NtuOpts | None = None,
) -> tuple[PepsState, list[NtuReport]]:
    """Second-order sweep: per step, gates exp(-h dtau/2) over bond_order,
    then the same gates over the reversed order. Returns the unnormalized
    evolved state and per-gate truncation reports."""
    if (state.lx, state.ly) != (spec.lx, spec.ly):
        raise ValueError("state and model lattice sizes differ")
    opts = opts or NtuOpts()
    gates = {
        bond: make_gate(bond_hamiltonian(spec, bond), schedule.dtau / 2.0)
        for bond in schedule.bond_order
    }
    reports: list[NtuReport] = []
    for _ in range(schedule.steps):
        for bond in schedule.bond_order + schedule.bond_order[::-1]:
            state, report = ntu_truncate(state, bond, gates[bond], max_d, opts)
            reports.append(report)
    return state, reports
