"""Thin-wire piecewise-sinusoidal Galerkin impedance matrices.

Lengths are in wavelengths, so the free-space wavenumber is ``2 pi``.
Each basis is two sinusoidal half-functions ("rise" on its first segment and
"fall" on its second). Reactions are computed once per segment pair and
shape pair, then summed into basis entries. Only pairs ``i <= j`` are
integrated; the lower triangle is filled by transposition, so assembled
matrices are exactly symmetric.

An infinite PEC plane at ``z = -h`` is handled with images: mirrored
geometry, horizontal current components negated and vertical ones kept. For
a mirrored segment this works out to the same parameterisation times -1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from scipy import constants

from .geometry import GROUPS, RIS, RX, TX, segment_distance

K0 = 2.0 * np.pi
ETA0 = constants.mu_0 * constants.c
_PREFACTOR = 1j * ETA0 / (4.0 * np.pi)

# (ratio of separation to segment length, Gauss order) levels; closer than
# NEAR_RATIO goes through singularity extraction
NEAR_RATIO = 2.0
FAR_LEVELS = ((5.0, 8), (15.0, 5), (np.inf, 3))
OVERLAP_TOL = 1e-6

_OUTER_BREAKS = np.array([0.0, 0.02, 0.08, 0.25, 0.5, 0.75, 0.92, 0.98, 1.0])
_OUTER_ORDER = 8
_INNER_ORDER = 16
_PAIR_BUDGET = 1_500_000


class KernelError(ValueError):
    pass


def _gauss01(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _composite01(breaks, order):
    x, w = _gauss01(order)
    lo, hi = breaks[:-1, None], breaks[1:, None]
    return (lo + (hi - lo) * x).ravel(), ((hi - lo) * w).ravel()


@dataclass(frozen=True)
class WireSet:
    """Flat segment arrays plus the PEC plane height (None = free space)."""
    start: np.ndarray
    end: np.ndarray
    radius: np.ndarray
    ground_z: float | None = None

    @classmethod
    def from_scene(cls, scene):
        return cls(scene.seg_start, scene.seg_end, scene.seg_radius,
                   scene.ground_z if scene.ground_plane else None)

    @property
    def length(self):
        return np.linalg.norm(self.end - self.start, axis=1)

    @property
    def tangent(self):
        return (self.end - self.start) / self.length[:, None]


def _shapes(u, d):
    """Rise/fall sinusoids and their derivatives at fractional positions u.

    u: (n, q), d: (n,). Returns g, dg with shape (n, 2, q).
    """
    s = u * d[:, None]
    sk = np.sin(K0 * d)[:, None]
    g = np.stack([np.sin(K0 * s), np.sin(K0 * (d[:, None] - s))], axis=1) / sk[:, None]
    dg = np.stack([np.cos(K0 * s), -np.cos(K0 * (d[:, None] - s))], axis=1) * (K0 / sk[:, None])
    return g, dg


def _mirror(points, ground_z):
    out = points.copy()
    out[..., 2] = 2.0 * ground_z - out[..., 2]
    return out


def _far_block(ws, i, j, order, image):
    """Plain Gauss-Legendre reactions for pairs (i, j); returns (n, 2, 2)."""
    x, w = _gauss01(order)
    d_i, d_j = ws.length[i], ws.length[j]
    t_i, t_j = ws.tangent[i], ws.tangent[j]
    p_obs = ws.start[i][:, None, :] + (x[None, :, None] * d_i[:, None, None]) * t_i[:, None, :]
    p_src = ws.start[j][:, None, :] + (x[None, :, None] * d_j[:, None, None]) * t_j[:, None, :]
    if image:
        p_src = _mirror(p_src, ws.ground_z)
        t_j = t_j * np.array([1.0, 1.0, -1.0])
    a2 = 0.5 * (ws.radius[i] ** 2 + ws.radius[j] ** 2)
    diff = p_obs[:, :, None, :] - p_src[:, None, :, :]
    r = np.sqrt(np.einsum("npqk,npqk->npq", diff, diff) + a2[:, None, None])
    green = np.exp(-1j * K0 * r) / r
    g_i, dg_i = _shapes(np.broadcast_to(x, (len(i), order)), d_i)
    g_j, dg_j = _shapes(np.broadcast_to(x, (len(j), order)), d_j)
    wi = (w * d_i[:, None])[:, None, :]
    wj = (w * d_j[:, None])[:, None, :]
    vec = (g_i * wi) @ green @ np.swapaxes(g_j * wj, 1, 2)
    sca = (dg_i * wi) @ green @ np.swapaxes(dg_j * wj, 1, 2)
    dot = np.einsum("nk,nk->n", t_i, t_j)[:, None, None]
    out = K0 * dot * vec - sca / K0
    return -out if image else out


def _near_block(ws, i, j):
    """Reactions with the 1/R and (s'-s0)/R parts of the inner kernel
    integrated analytically. Used for self, adjacent and close pairs.
    """
    xo, wo = _composite01(_OUTER_BREAKS, _OUTER_ORDER)
    xi, wi = _gauss01(_INNER_ORDER)
    n = len(i)
    d_i, d_j = ws.length[i], ws.length[j]
    t_i, t_j = ws.tangent[i], ws.tangent[j]
    a2 = 0.5 * (ws.radius[i] ** 2 + ws.radius[j] ** 2)
    p_obs = ws.start[i][:, None, :] + (xo[None, :, None] * d_i[:, None, None]) * t_i[:, None, :]
    v = p_obs - ws.start[j][:, None, :]
    s0 = np.einsum("npk,nk->np", v, t_j)
    rho2 = np.maximum(np.einsum("npk,npk->np", v, v) - s0 * s0, 0.0) + a2[:, None]
    rho = np.sqrt(rho2)
    dj = d_j[:, None]
    j0 = np.arcsinh((dj - s0) / rho) + np.arcsinh(s0 / rho)
    j1 = np.sqrt((dj - s0) ** 2 + rho2) - np.sqrt(s0 * s0 + rho2)

    s_src = xi[None, :] * dj  # (n, qi)
    u = s_src[:, None, :] - s0[:, :, None]  # (n, po, qi)
    r = np.sqrt(u * u + rho2[:, :, None])
    phase = np.exp(-1j * K0 * r)
    sk = np.sin(K0 * d_j)[:, None]

    def trig(s, d):
        return np.sin(K0 * s), np.cos(K0 * s), np.sin(K0 * (d - s)), np.cos(K0 * (d - s))

    sr, cr, sf, cf = trig(s_src[:, None, :], dj[:, :, None])
    sr0, cr0, sf0, cf0 = trig(s0, dj)
    skk = sk[..., None]
    # source functions h and dh/ds' at the quadrature points and at s0
    h_q = [sr / skk, sf / skk, K0 * cr / skk, -K0 * cf / skk]
    h_0 = [sr0 / sk, sf0 / sk, K0 * cr0 / sk, -K0 * cf0 / sk]
    dh_0 = [K0 * cr0 / sk, -K0 * cf0 / sk, -K0 ** 2 * sr0 / sk, -K0 ** 2 * sf0 / sk]
    wq = (wi[None, :] * dj)[:, None, :]
    inner = []
    for hq, h0, dh0 in zip(h_q, h_0, dh_0):
        rem = (hq * phase - h0[..., None] - dh0[..., None] * u) / r
        inner.append(np.sum(rem * wq, axis=2) + h0 * j0 + dh0 * j1)
    inner_g = np.stack(inner[:2], axis=1)  # (n, 2, po)
    inner_dg = np.stack(inner[2:], axis=1)
    g_i, dg_i = _shapes(np.broadcast_to(xo, (n, len(xo))), d_i)
    w_obs = (wo[None, :] * d_i[:, None])[:, None, :]
    vec = (g_i * w_obs) @ np.swapaxes(inner_g, 1, 2)
    sca = (dg_i * w_obs) @ np.swapaxes(inner_dg, 1, 2)
    dot = np.einsum("nk,nk->n", t_i, t_j)[:, None, None]
    return K0 * dot * vec - sca / K0


def _shares_node(ws, i, j):
    ends_i = np.stack([ws.start[i], ws.end[i]], axis=1)
    ends_j = np.stack([ws.start[j], ws.end[j]], axis=1)
    gap = np.linalg.norm(ends_i[:, :, None] - ends_j[:, None, :], axis=-1)
    return np.any(gap < 1e-9, axis=(1, 2))


def _classify(ws, i, j, image):
    p0, p1 = ws.start[j], ws.end[j]
    if image:
        p0, p1 = _mirror(p0, ws.ground_z), _mirror(p1, ws.ground_z)
    dist = segment_distance(ws.start[i], ws.end[i], p0, p1)
    scale = np.maximum(ws.length[i], ws.length[j])
    return dist, dist / scale


def _chunks(count, per_pair):
    step = max(1, _PAIR_BUDGET // per_pair)
    for lo in range(0, count, step):
        yield slice(lo, min(count, lo + step))


def segment_reactions(ws, i, j):
    """Reaction integrals K[n, a, b] for segment pairs (i[n], j[n]).

    ``a``/``b`` index the rise (0) and fall (1) half-functions on the
    observation and source segment. The PEC image term is included when
    ``ws.ground_z`` is set. Impedance contributions are
    ``1j * eta0 / (4 pi) * K``.
    """
    i = np.asarray(i, dtype=np.intp)
    j = np.asarray(j, dtype=np.intp)
    out = np.zeros((len(i), 2, 2), dtype=complex)
    images = (False, True) if ws.ground_z is not None else (False,)
    for image in images:
        dist, ratio = _classify(ws, i, j, image)
        near = ratio < NEAR_RATIO
        if np.any(near):
            bad = near & (dist < OVERLAP_TOL) & (i != j)
            if not image and np.any(bad):
                bad &= ~_shares_node(ws, i, j)
            if np.any(bad):
                k = int(np.flatnonzero(bad)[0])
                raise KernelError(f"segments {i[k]} and {j[k]} are closer than {OVERLAP_TOL} "
                                  f"wavelengths without sharing a node")
            if image:
                raise KernelError("conductor too close to its ground-plane image")
            idx = np.flatnonzero(near)
            per = len(_OUTER_BREAKS) * _OUTER_ORDER * _INNER_ORDER
            for sl in _chunks(len(idx), per):
                out[idx[sl]] += _near_block(ws, i[idx[sl]], j[idx[sl]])
        lo = NEAR_RATIO
        for hi, order in FAR_LEVELS:
            idx = np.flatnonzero((ratio >= lo) & (ratio < hi))
            lo = hi
            for sl in _chunks(len(idx), order * order * 4):
                out[idx[sl]] += _far_block(ws, i[idx[sl]], j[idx[sl]], order, image)
    return out


def reaction_table(ws, seg_rows, seg_cols):
    """Segment-shape reaction matrix of shape (2*len(seg_rows), 2*len(seg_cols)).

    Only canonical pairs (min, max) are integrated; self pairs are
    symmetrised over the shape indices.
    """
    seg_rows = np.asarray(seg_rows, dtype=np.intp)
    seg_cols = np.asarray(seg_cols, dtype=np.intp)
    gi, gj = np.meshgrid(seg_rows, seg_cols, indexing="ij")
    lo, hi = np.minimum(gi, gj), np.maximum(gi, gj)
    n_seg = len(ws.radius)
    keys, inverse = np.unique((lo * n_seg + hi).ravel(), return_inverse=True)
    ci, cj = keys // n_seg, keys % n_seg
    k = segment_reactions(ws, ci, cj)
    diag = ci == cj
    k[diag] = 0.5 * (k[diag] + np.swapaxes(k[diag], 1, 2))
    vals = k[inverse]  # (rows*cols, 2, 2) in canonical orientation
    swapped = (gi > gj).ravel()
    vals[swapped] = np.swapaxes(vals[swapped], 1, 2)
    vals = vals.reshape(len(seg_rows), len(seg_cols), 2, 2)
    return vals.transpose(0, 2, 1, 3).reshape(2 * len(seg_rows), 2 * len(seg_cols))


def impedance_block(scene, rows, cols, ws=None):
    """Impedance entries (ohms) between basis index arrays ``rows`` and ``cols``."""
    ws = WireSet.from_scene(scene) if ws is None else ws
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    bseg = scene.basis_segments
    seg_r, inv_r = np.unique(bseg[rows].ravel(), return_inverse=True)
    seg_c, inv_c = np.unique(bseg[cols].ravel(), return_inverse=True)
    inv_r, inv_c = inv_r.reshape(-1, 2), inv_c.reshape(-1, 2)
    table = reaction_table(ws, seg_r, seg_c)
    ra, rb = 2 * inv_r[:, 0], 2 * inv_r[:, 1] + 1
    ca, cb = 2 * inv_c[:, 0], 2 * inv_c[:, 1] + 1
    # grouped so that swapping rows and cols gives a bitwise transpose
    z = ((table[np.ix_(ra, ca)] + table[np.ix_(rb, cb)])
         + (table[np.ix_(ra, cb)] + table[np.ix_(rb, ca)]))
    return _PREFACTOR * z


def mutual_impedance(m, n, scene):
    """Galerkin reaction (ohms) between bases m and n of ``scene``."""
    a, b = min(m, n), max(m, n)
    return complex(impedance_block(scene, [a], [b])[0, 0])


@dataclass(frozen=True)
class PartitionedZ:
    """The nine T/R/S blocks of the scene impedance matrix."""
    Z_TT: np.ndarray
    Z_TR: np.ndarray
    Z_TS: np.ndarray
    Z_RT: np.ndarray
    Z_RR: np.ndarray
    Z_RS: np.ndarray
    Z_ST: np.ndarray
    Z_SR: np.ndarray
    Z_SS: np.ndarray

    @property
    def sizes(self):
        return self.Z_TT.shape[0], self.Z_RR.shape[0], self.Z_SS.shape[0]

    def block(self, a, b):
        return getattr(self, f"Z_{a[0]}{b[0]}")

    def full(self):
        return np.block([[self.Z_TT, self.Z_TR, self.Z_TS],
                         [self.Z_RT, self.Z_RR, self.Z_RS],
                         [self.Z_ST, self.Z_SR, self.Z_SS]])

    def swapped_roles(self):
        """Exchange the T and R partitions."""
        return PartitionedZ(self.Z_RR, self.Z_RT, self.Z_RS, self.Z_TR, self.Z_TT, self.Z_TS,
                            self.Z_SR, self.Z_ST, self.Z_SS)

    def replace(self, **blocks):
        return replace(self, **blocks)

    @classmethod
    def from_full(cls, z, n_t, n_r):
        t, r, s = slice(0, n_t), slice(n_t, n_t + n_r), slice(n_t + n_r, None)
        return cls(z[t, t], z[t, r], z[t, s], z[r, t], z[r, r], z[r, s],
                   z[s, t], z[s, r], z[s, s])


def _check_partition_order(scene):
    g = scene.basis_group
    n_t, n_r, _ = scene.counts
    if not (np.all(g[:n_t] == TX) and np.all(g[n_t:n_t + n_r] == RX)
            and np.all(g[n_t + n_r:] == RIS)):
        raise KernelError("scene bases are not ordered T, R, S")


def assemble_partitioned(scene):
    """Full impedance matrix of ``scene`` split into its nine blocks."""
    _check_partition_order(scene)
    idx = np.arange(scene.n_bases)
    z = impedance_block(scene, idx, idx)
    n_t, n_r, _ = scene.counts
    return PartitionedZ.from_full(z, n_t, n_r)


def update_receiver_blocks(zp, scene):
    """Recompute every block touching R (Rx moved, T and S unchanged)."""
    _check_partition_order(scene)
    ws = WireSet.from_scene(scene)
    t, r, s = (scene.group_indices(g) for g in GROUPS)
    z_rr = impedance_block(scene, r, r, ws)
    z_rt = impedance_block(scene, r, t, ws)
    z_rs = impedance_block(scene, r, s, ws)
    return zp.replace(Z_RR=z_rr, Z_RT=z_rt, Z_TR=z_rt.T.copy(), Z_RS=z_rs,
                      Z_SR=z_rs.T.copy())


@dataclass(frozen=True)
class LoadMatrices:
    """Diagonals of the T, R and S load matrices (ohms).

    ``np.inf`` marks an open-circuited port; such bases carry no current.
    """
    zl_tt: np.ndarray
    zl_rr: np.ndarray
    zl_ss: np.ndarray

    @property
    def ZL_TT(self):
        return np.diag(self.zl_tt)

    @property
    def ZL_RR(self):
        return np.diag(self.zl_rr)

    @property
    def ZL_SS(self):
        return np.diag(self.zl_ss)

    def swapped_roles(self):
        return LoadMatrices(self.zl_rr, self.zl_tt, self.zl_ss)

    def scaled(self, factor):
        return LoadMatrices(self.zl_tt * factor, self.zl_rr * factor, self.zl_ss * factor)


def port_loads(scene, group, value):
    """Load diagonal for ``group`` with ``value`` at port bases, 0 elsewhere."""
    idx = scene.group_indices(group)
    out = np.zeros(len(idx), dtype=complex)
    out[scene.basis_is_port[idx]] = value
    return out


def make_loads(scene, port_load=50.0, ris_loads=None):
    """Tx/Rx ports loaded with ``port_load``; RIS port loads per element.

    ``ris_loads`` lists one load per RIS element (``np.inf`` for open); the
    default shorts every RIS port.
    """
    zl_ss = port_loads(scene, RIS, 0.0)
    if ris_loads is not None:
        s = scene.group_indices(RIS)
        ports = np.flatnonzero(scene.basis_is_port[s])
        ris_loads = np.asarray(ris_loads, dtype=complex)
        if len(ris_loads) != len(ports):
            raise ValueError(f"expected {len(ports)} RIS loads, got {len(ris_loads)}")
        zl_ss[ports] = ris_loads
    return LoadMatrices(port_loads(scene, TX, port_load), port_loads(scene, RX, port_load),
                        zl_ss)


def write_partitioned_csv(zp, path):
    """Dump the full matrix: a size header then one row of re,im pairs per row."""
    z = zp.full()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N_T", "N_R", "N_S"])
        w.writerow(zp.sizes)
        for row in z:
            w.writerow([f"{v:.17g}" for c in row for v in (c.real, c.imag)])


def read_partitioned_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    n_t, n_r, n_s = (int(v) for v in rows[1])
    data = np.array([[float(v) for v in row] for row in rows[2:]])
    z = data[:, 0::2] + 1j * data[:, 1::2]
    if z.shape != (n_t + n_r + n_s,) * 2:
        raise ValueError(f"{path}: matrix shape {z.shape} does not match header")
    return PartitionedZ.from_full(z, n_t, n_r)
