"""Wire meshes for dipoles, loops, the Tx/Rx arrays and the RIS grid.

All coordinates are in wavelengths. Planar strips of width ``w`` are replaced
by round wires of radius ``w / 4``. Every element lies parallel to the xy
plane; dipoles point along y and arrays are laid out along x.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

TX, RX, RIS = "TX", "RX", "RIS"
GROUPS = (TX, RX, RIS)

NODE_TOL = 1e-9


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class WireSegment:
    start: np.ndarray
    end: np.ndarray
    radius: float

    @property
    def length(self):
        return float(np.linalg.norm(self.end - self.start))


@dataclass(frozen=True)
class BasisFunction:
    """Piecewise-sinusoidal basis spanning two segments.

    Current flows along ``segment_pair[0]`` into the shared node and out along
    ``segment_pair[1]``; the node is the end of the first and the start of the
    second segment.
    """
    segment_pair: tuple
    is_port: bool = False
    group: str = RIS
    element_id: int = 0


@dataclass
class StructureMesh:
    starts: np.ndarray
    ends: np.ndarray
    radii: np.ndarray
    bases: list
    port_basis_index: int | None = None
    kind: str = "dipole"
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def segments(self):
        return [WireSegment(s, e, float(r)) for s, e, r in zip(self.starts, self.ends, self.radii)]

    @property
    def n_segments(self):
        return len(self.starts)

    def relabel(self, group, element_id):
        bases = [replace(b, group=group, element_id=element_id) for b in self.bases]
        return replace(self, bases=bases)

    def translated(self, offset):
        offset = np.asarray(offset, dtype=float)
        return replace(self, starts=self.starts + offset, ends=self.ends + offset,
                       center=self.center + offset)

    def check(self):
        lengths = np.linalg.norm(self.ends - self.starts, axis=1)
        if np.any(lengths <= 0) or np.any(self.radii <= 0):
            raise GeometryError("segments need positive length and radius")
        if np.any(self.radii >= lengths / 2):
            raise GeometryError("wire radius must be below half the segment length")
        for b in self.bases:
            a, c = b.segment_pair
            if np.linalg.norm(self.ends[a] - self.starts[c]) > NODE_TOL:
                raise GeometryError(f"basis {b} segments do not share a node")
        return self


def _unit(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise GeometryError("zero axis vector")
    return v / n


def mesh_dipole(length, strip_width, n_segments, center=(0.0, 0.0, 0.0), axis=(0.0, 1.0, 0.0),
                group=RIS, element_id=0):
    """Straight dipole with ``n_segments`` unknowns and a centre port.

    A "segment" here is one basis function (one unknown), so the wire is cut
    into ``n_segments + 1`` equal pieces. ``n_segments`` must be odd so that
    the port basis sits exactly at the dipole centre.
    """
    if length <= 0 or strip_width <= 0:
        raise GeometryError("dipole length and strip width must be positive")
    if n_segments < 3 or n_segments % 2 == 0:
        raise GeometryError(f"dipole needs an odd segment count >= 3, got {n_segments}")
    center = np.asarray(center, dtype=float)
    axis = _unit(axis)
    n_wires = n_segments + 1
    t = np.linspace(-0.5, 0.5, n_wires + 1) * length
    nodes = center + t[:, None] * axis
    port = (n_segments - 1) // 2
    bases = [BasisFunction((i, i + 1), i == port, group, element_id)
             for i in range(n_segments)]
    mesh = StructureMesh(nodes[:-1].copy(), nodes[1:].copy(),
                         np.full(n_wires, strip_width / 4.0), bases, port, "dipole", center)
    return mesh.check()


_LOOP_SIDES = {"-y": 0, "+x": 1, "+y": 2, "-x": 3}


def mesh_loop(side_a, side_b, strip_width, n_per_side, center=(0.0, 0.0, 0.0),
              group=RIS, element_id=0, port_side="-x"):
    """Closed rectangular loop in the plane z = center[2].

    ``side_a`` runs along x and ``side_b`` along y; nodes run counter-clockwise
    from the (-x, -y) corner. The port basis sits on ``port_side`` at the node
    closest to its midpoint (exactly the midpoint for even ``n_per_side``).
    The default -x side runs parallel to the y-directed Tx/Rx dipoles; on an
    x-directed side the induced current vanishes at the midpoint by symmetry.
    """
    if side_a <= 0 or side_b <= 0 or strip_width <= 0:
        raise GeometryError("loop sides and strip width must be positive")
    if n_per_side < 2:
        raise GeometryError(f"loop needs at least 2 segments per side, got {n_per_side}")
    if port_side not in _LOOP_SIDES:
        raise GeometryError(f"port_side must be one of {sorted(_LOOP_SIDES)}")
    center = np.asarray(center, dtype=float)
    ha, hb = side_a / 2.0, side_b / 2.0
    corners = np.array([[-ha, -hb, 0.0], [ha, -hb, 0.0], [ha, hb, 0.0], [-ha, hb, 0.0]])
    nodes = []
    for c in range(4):
        p0, p1 = corners[c], corners[(c + 1) % 4]
        for i in range(n_per_side):
            nodes.append(p0 + (p1 - p0) * i / n_per_side)
    nodes = np.asarray(nodes) + center
    n = len(nodes)
    starts = nodes
    ends = np.roll(nodes, -1, axis=0)
    port = _LOOP_SIDES[port_side] * n_per_side + n_per_side // 2
    # basis j sits at node j: in along segment j-1, out along segment j
    bases = [BasisFunction(((j - 1) % n, j), j == port, group, element_id) for j in range(n)]
    mesh = StructureMesh(starts.copy(), ends.copy(), np.full(n, strip_width / 4.0),
                         bases, port, "loop", center)
    return mesh.check()


def rx_center(r, theta_deg):
    """Rx array centre for distance ``r`` and angle measured from broadside (+z)."""
    th = np.deg2rad(theta_deg)
    return np.array([r * np.sin(th), 0.0, r * np.cos(th)])


def _array_offsets(count, spacing):
    return (np.arange(count) - (count - 1) / 2.0) * spacing


@dataclass
class Scene:
    tx_meshes: list
    rx_meshes: list
    ris_meshes: list
    ground_plane: bool
    height: float
    r_t: np.ndarray
    r_r: np.ndarray
    dims: dict = field(default_factory=dict)

    @property
    def meshes(self):
        return [*self.tx_meshes, *self.rx_meshes, *self.ris_meshes]

    @property
    def ground_z(self):
        """z of the PEC plane (RIS plane sits at z = 0)."""
        return -self.height

    @cached_property
    def _flat(self):
        starts, ends, radii, bseg, bgroup, belem, bport = [], [], [], [], [], [], []
        offset = 0
        for mesh in self.meshes:
            starts.append(mesh.starts)
            ends.append(mesh.ends)
            radii.append(mesh.radii)
            for b in mesh.bases:
                bseg.append((b.segment_pair[0] + offset, b.segment_pair[1] + offset))
                bgroup.append(b.group)
                belem.append(b.element_id)
                bport.append(b.is_port)
            offset += mesh.n_segments
        return (np.concatenate(starts), np.concatenate(ends), np.concatenate(radii),
                np.asarray(bseg, dtype=np.intp).reshape(-1, 2), np.asarray(bgroup),
                np.asarray(belem, dtype=np.intp), np.asarray(bport, dtype=bool))

    @property
    def seg_start(self):
        return self._flat[0]

    @property
    def seg_end(self):
        return self._flat[1]

    @property
    def seg_radius(self):
        return self._flat[2]

    @property
    def basis_segments(self):
        return self._flat[3]

    @property
    def basis_group(self):
        return self._flat[4]

    @property
    def basis_element(self):
        return self._flat[5]

    @property
    def basis_is_port(self):
        return self._flat[6]

    @property
    def n_bases(self):
        return len(self.basis_group)

    def group_indices(self, group):
        return np.flatnonzero(self.basis_group == group)

    @property
    def counts(self):
        return tuple(int(np.sum(self.basis_group == g)) for g in GROUPS)

    def port_indices(self, group):
        """Partition-local indices of the port bases of ``group``."""
        idx = self.group_indices(group)
        return np.flatnonzero(self.basis_is_port[idx])

    def with_rx(self, rx_meshes, r_r):
        return Scene(self.tx_meshes, rx_meshes, self.ris_meshes, self.ground_plane,
                     self.height, self.r_t, np.asarray(r_r, dtype=float), dict(self.dims))

    def translated(self, offset):
        """Rigid translation (only meaningful without a ground plane)."""
        offset = np.asarray(offset, dtype=float)
        mv = lambda ms: [m.translated(offset) for m in ms]
        return Scene(mv(self.tx_meshes), mv(self.rx_meshes), mv(self.ris_meshes),
                     self.ground_plane, self.height, self.r_t + offset, self.r_r + offset,
                     dict(self.dims))

    def check(self):
        if self.ground_plane:
            zmin = min(self.seg_start[:, 2].min(), self.seg_end[:, 2].min())
            if zmin <= self.ground_z:
                raise GeometryError("conductor at or below the ground plane")
        _check_overlaps(self.meshes)
        return self


def segment_distance(p0, p1, q0, q1):
    """Minimum distance between segment sets [p0,p1] and [q0,q1] (broadcast).

    Degenerate (zero-length) segments are treated as points.
    """
    d1, d2, r = p1 - p0, q1 - q0, p0 - q0
    a = np.einsum("...i,...i", d1, d1)
    e = np.einsum("...i,...i", d2, d2)
    b = np.einsum("...i,...i", d1, d2)
    c = np.einsum("...i,...i", d1, r)
    f = np.einsum("...i,...i", d2, r)
    tiny = 1e-300
    a_ok, e_ok = a > tiny, e > tiny
    a_s, e_s = np.where(a_ok, a, 1.0), np.where(e_ok, e, 1.0)
    denom = a * e - b * b
    general = denom > 1e-14 * a * e
    s = np.where(general, np.clip((b * f - c * e) / np.where(general, denom, 1.0), 0, 1), 0.0)
    s = np.where(a_ok, s, 0.0)
    t = np.where(e_ok, (b * s + f) / e_s, 0.0)
    t_c = np.clip(t, 0, 1)
    s = np.where(a_ok & (t != t_c), np.clip((b * t_c - c) / a_s, 0, 1), s)
    # q is a point: project it onto p
    s = np.where(a_ok & ~e_ok, np.clip(-c / a_s, 0, 1), s)
    diff = p0 + s[..., None] * d1 - (q0 + t_c[..., None] * d2)
    return np.linalg.norm(diff, axis=-1)


def _check_overlaps(meshes):
    lo = np.array([np.minimum(m.starts, m.ends).min(axis=0) - m.radii.max() for m in meshes])
    hi = np.array([np.maximum(m.starts, m.ends).max(axis=0) + m.radii.max() for m in meshes])
    for i in range(len(meshes)):
        gap = np.maximum(0.0, np.maximum(lo[i + 1:] - hi[i], lo[i] - hi[i + 1:]))
        for j in np.flatnonzero(np.linalg.norm(gap, axis=1) == 0.0) + i + 1:
            a, b = meshes[i], meshes[j]
            d = segment_distance(a.starts[:, None], a.ends[:, None], b.starts[None], b.ends[None])
            clearance = a.radii[:, None] + b.radii[None]
            if np.any(d <= clearance):
                raise GeometryError(f"overlapping conductors between structures {i} and {j}")


def ris_centers(m_x, m_y, d_x, d_y):
    """Unit-cell centres, row-major over (m_y, m_x), centred on the origin."""
    xs = _array_offsets(m_x, d_x)
    ys = _array_offsets(m_y, d_y)
    return np.array([[x, y, 0.0] for y in ys for x in xs])


def _element(cfg, center, group, element_id):
    if group == RIS and cfg.element_kind == "loop":
        return mesh_loop(cfg.loop_side_a_lambda, cfg.loop_side_b_lambda, cfg.strip_width_lambda,
                         cfg.n_per_side_loop, center, group, element_id)
    length = cfg.dipole_length_lambda if group == RIS else cfg.antenna_length_lambda
    return mesh_dipole(length, cfg.strip_width_lambda, cfg.n_segments_dipole, center,
                       (0.0, 1.0, 0.0), group, element_id)


def rx_meshes(cfg, r, theta_deg):
    r_r = rx_center(r, theta_deg)
    meshes = [_element(cfg, r_r + [dx, 0.0, 0.0], RX, i)
              for i, dx in enumerate(_array_offsets(cfg.m_xr, cfg.spacing_xr_lambda))]
    return meshes, r_r


def build_scene(cfg, r=None, theta_deg=None):
    """Assemble the Tx array, Rx array and RIS grid described by ``cfg``."""
    r = cfg.r_lambda if r is None else r
    theta_deg = cfg.theta_deg if theta_deg is None else theta_deg
    r_t = np.asarray(cfg.tx_position_lambda, dtype=float)
    tx = [_element(cfg, r_t + [dx, 0.0, 0.0], TX, i)
          for i, dx in enumerate(_array_offsets(cfg.m_xt, cfg.spacing_xt_lambda))]
    rx, r_r = rx_meshes(cfg, r, theta_deg)
    ris = [_element(cfg, c, RIS, i) for i, c in
           enumerate(ris_centers(cfg.m_x, cfg.m_y, cfg.pitch_x_lambda, cfg.pitch_y_lambda))]
    dims = dict(l=cfg.dipole_length_lambda, w=cfg.strip_width_lambda,
                a=cfg.loop_side_a_lambda, b=cfg.loop_side_b_lambda,
                d_x=cfg.pitch_x_lambda, d_y=cfg.pitch_y_lambda, h=cfg.height_lambda,
                d_xt=cfg.spacing_xt_lambda, d_xr=cfg.spacing_xr_lambda,
                M_x=cfg.m_x, M_y=cfg.m_y, M_xt=cfg.m_xt, M_xr=cfg.m_xr,
                R=r, theta=theta_deg, kind=cfg.element_kind)
    scene = Scene(tx, rx, ris, cfg.ground_plane, cfg.height_lambda, r_t, r_r, dims)
    return scene.check()


def far_field_distance(cfg):
    """2 D^2 / lambda for the RIS aperture diagonal D."""
    if cfg.element_kind == "loop":
        ex, ey = cfg.loop_side_a_lambda, cfg.loop_side_b_lambda
    else:
        ex, ey = cfg.strip_width_lambda, cfg.dipole_length_lambda
    dx = (cfg.m_x - 1) * cfg.pitch_x_lambda + ex
    dy = (cfg.m_y - 1) * cfg.pitch_y_lambda + ey
    return 2.0 * (dx * dx + dy * dy)


def write_mesh_csv(scene, path):
    port_segments = {}
    for (a, b), is_port in zip(scene.basis_segments, scene.basis_is_port):
        if is_port:
            port_segments[a] = port_segments[b] = True
    seg_group, seg_elem = [], []
    for mesh in scene.meshes:
        g = mesh.bases[0].group
        e = mesh.bases[0].element_id
        seg_group += [g] * mesh.n_segments
        seg_elem += [e] * mesh.n_segments
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1_lambda", "y1_lambda", "z1_lambda", "x2_lambda", "y2_lambda",
                    "z2_lambda", "radius_lambda", "group", "element_id", "is_port"])
        for i, (s, e, r) in enumerate(zip(scene.seg_start, scene.seg_end, scene.seg_radius)):
            w.writerow([*(f"{v:.12g}" for v in (*s, *e, r)), seg_group[i], seg_elem[i],
                        int(port_segments.get(i, False))])
