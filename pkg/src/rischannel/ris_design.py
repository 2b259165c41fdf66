"""1-bit RIS state design and far-field scattering patterns."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .em_kernel import ETA0, K0, impedance_block, make_loads
from .geometry import RIS, TX
from .network import _inv, ris_state_matrix

DIPOLE, LOOP = "dipole", "loop"

ON_LOAD = 0.0
OFF_LOAD = np.inf


@dataclass(frozen=True)
class UnitCellPhases:
    """Reflection phases (degrees) of a unit cell in its two load states."""
    phi_on: float
    phi_off: float

    @property
    def difference(self):
        return wrap_deg(self.phi_off - self.phi_on)

    def is_usable(self):
        return 90.0 <= abs(self.difference) <= 180.0


def wrap_deg(x):
    """Wrap angles to [-180, 180)."""
    return (np.asarray(x, dtype=float) + 180.0) % 360.0 - 180.0


def default_unit_cell_phases(element_kind):
    """Unit-cell phases of the planar dipole and loop cells over ground."""
    kind = str(element_kind).lower()
    if kind == DIPOLE:
        return UnitCellPhases(6.4, 164.6)
    if kind == LOOP:
        return UnitCellPhases(-56.0, 122.8)
    raise ValueError(f"unknown element kind {element_kind!r}")


@dataclass(frozen=True)
class RISState:
    """ON (True) = shorted port, OFF (False) = open port; grid is (M_y, M_x)."""
    bits: np.ndarray

    def loads(self):
        """Per-element port loads, row-major."""
        return np.where(self.bits.ravel(), ON_LOAD, OFF_LOAD).astype(complex)

    @classmethod
    def uniform(cls, m_y, m_x, on):
        return cls(np.full((m_y, m_x), bool(on)))


def ris_element_centers(scene):
    return np.array([m.center for m in scene.ris_meshes])


def beam_direction(theta_deg):
    th = np.deg2rad(theta_deg)
    return np.array([np.sin(th), 0.0, np.cos(th)])


def desired_phases(centers, r_t, beam_theta_deg):
    """Per-cell phase target psi = -k (|r - r_t| - u.r), degrees in [0, 360).

    Uses the exact spherical distance to the Tx, so the target is valid with
    the Tx a few wavelengths away.
    """
    u = beam_direction(beam_theta_deg)
    path = np.linalg.norm(centers - r_t, axis=1) - centers @ u
    return np.rad2deg(-K0 * path) % 360.0


def choose_states(psi_deg, phases):
    """Per-element state whose phase is closest to psi; ties go to OFF."""
    err_on = np.abs(wrap_deg(psi_deg - phases.phi_on))
    err_off = np.abs(wrap_deg(psi_deg - phases.phi_off))
    return err_on < err_off


def phase_error_cost(bits, psi_deg, phases):
    """Sum of squared wrapped phase errors of a state (degrees^2)."""
    phi = np.where(bits, phases.phi_on, phases.phi_off)
    return float(np.sum(wrap_deg(psi_deg - phi) ** 2))


def optimize_binary_states(scene, phases, beam_theta_deg):
    m_y, m_x = scene.dims["M_y"], scene.dims["M_x"]
    psi = desired_phases(ris_element_centers(scene), scene.r_t, beam_theta_deg)
    return RISState(choose_states(psi, phases).reshape(m_y, m_x))


def _segment_points(scene, order=8):
    x, w = np.polynomial.legendre.leggauss(order)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    d = np.linalg.norm(scene.seg_end - scene.seg_start, axis=1)
    t = (scene.seg_end - scene.seg_start) / d[:, None]
    pts = scene.seg_start[:, None, :] + (x[None, :, None] * d[:, None, None]) * t[:, None, :]
    s = x[None, :] * d[:, None]
    sk = np.sin(K0 * d)[:, None]
    rise = np.sin(K0 * s) / sk
    fall = np.sin(K0 * (d[:, None] - s)) / sk
    return pts, t, rise * w * d[:, None], fall * w * d[:, None]


def far_field(scene, currents, direction):
    """Far-zone E-field factor (e^{-jkR}/R removed) of basis ``currents``.

    ``direction`` is one unit vector or an array of them. Image currents are
    added when the scene has a ground plane; directions below the plane get a
    zero field.
    """
    currents = np.asarray(currents, dtype=complex)
    u = np.atleast_2d(np.asarray(direction, dtype=float))
    if not np.allclose(np.linalg.norm(u, axis=1), 1.0, atol=1e-9):
        raise ValueError("direction must be a unit vector")
    n_seg = len(scene.seg_radius)
    c_rise = np.zeros(n_seg, dtype=complex)
    c_fall = np.zeros(n_seg, dtype=complex)
    np.add.at(c_rise, scene.basis_segments[:, 0], currents)
    np.add.at(c_fall, scene.basis_segments[:, 1], currents)
    pts, t, wr, wf = _segment_points(scene)
    amp = (c_rise[:, None] * wr + c_fall[:, None] * wf).ravel()
    pts = pts.reshape(-1, 3)
    vec = np.repeat(t, wr.shape[1], axis=0) * amp[:, None]
    f = np.exp(1j * K0 * (u @ pts.T)) @ vec
    if scene.ground_plane:
        img_pts = pts.copy()
        img_pts[:, 2] = 2.0 * scene.ground_z - img_pts[:, 2]
        img_vec = -vec * np.array([1.0, 1.0, -1.0])
        f = f + np.exp(1j * K0 * (u @ img_pts.T)) @ img_vec
        below = u[:, 2] < 0
        if np.any(below):
            warnings.warn("directions below the ground plane have zero field", stacklevel=2)
            f[below] = 0.0
    f_perp = f - np.sum(f * u, axis=1)[:, None] * u
    e = -1j * K0 * ETA0 / (4.0 * np.pi) * f_perp
    return e[0] if np.ndim(direction) == 1 else e


class PatternSolver:
    """Caches Z_TT, Z_ST and Z_SS so several states can be evaluated.

    Blocks are taken from ``zp`` when an assembled matrix is at hand.
    """

    def __init__(self, scene, port_load=50.0, zp=None):
        self.scene = scene
        self.t = scene.group_indices(TX)
        self.s = scene.group_indices(RIS)
        if zp is None:
            self.z_tt = impedance_block(scene, self.t, self.t)
            self.z_st = impedance_block(scene, self.s, self.t)
            self.z_ss = impedance_block(scene, self.s, self.s)
        else:
            self.z_tt, self.z_st, self.z_ss = zp.Z_TT, zp.Z_ST, zp.Z_SS
        self.port_load = port_load

    def currents(self, state):
        """Tx currents for unit port voltages, then the induced RIS currents."""
        scene = self.scene
        loads = make_loads(scene, self.port_load, state.loads())
        v_t = np.zeros(len(self.t), dtype=complex)
        v_t[scene.port_indices(TX)] = 1.0
        i_t = _inv(self.z_tt + np.diag(loads.zl_tt), "Z_TT + Z^L_TT") @ v_t
        phi = ris_state_matrix(self.z_ss, loads.zl_ss).Phi
        i_s = -phi @ (self.z_st @ i_t)
        return i_t, i_s

    def field(self, state, theta_deg):
        """RIS-only scattered field over an x-z plane cut."""
        _, i_s = self.currents(state)
        full = np.zeros(self.scene.n_bases, dtype=complex)
        full[self.s] = i_s
        th = np.deg2rad(np.asarray(theta_deg, dtype=float))
        dirs = np.stack([np.sin(th), np.zeros_like(th), np.cos(th)], axis=1)
        return far_field(self.scene, full, dirs)

    def pattern(self, state, theta_deg):
        power = np.sum(np.abs(self.field(state, theta_deg)) ** 2, axis=1)
        return 10.0 * np.log10(np.maximum(power / power.max(), 1e-30))

    def level(self, state, theta_deg):
        """Unnormalised scattered power (dB) for absolute comparisons."""
        power = np.sum(np.abs(self.field(state, theta_deg)) ** 2, axis=1)
        return 10.0 * np.log10(np.maximum(power, 1e-300))


def scattering_pattern(scene, state, theta_grid, port_load=50.0):
    """Normalised RIS scattering pattern (dB, peak 0) in the x-z plane."""
    return PatternSolver(scene, port_load).pattern(state, theta_grid)


def write_state_csv(state, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"col{j} (1=ON short,0=OFF open)" for j in range(state.bits.shape[1])])
        for row in state.bits:
            w.writerow([int(b) for b in row])


def read_state_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return RISState(np.array([[bool(int(v)) for v in row] for row in rows]))


def write_pattern_csv(theta_deg, level_db, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta_deg", "level_dB"])
        for t, v in zip(theta_deg, level_db):
            w.writerow([f"{t:.6g}", f"{v:.9g}"])
