"""Capacity, distance sweeps and path-loss exponent fits."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .em_kernel import assemble_partitioned, impedance_block, make_loads, update_receiver_blocks
from .geometry import RIS, RX, TX, GeometryError, build_scene, rx_meshes
from .network import fullwave_channel, reduced_channel

log = logging.getLogger(__name__)

# capacities in bits/s/Hz
CURVE_COLUMNS = ["R_lambda", "C_fullwave", "C_reduced", "theta_deg", "gamma_dB"]


def capacity(h, gamma, m_xt):
    """log2 det(I + gamma/m_xt H H^H) in bits/s/Hz.

    Evaluated from the eigenvalues of the Hermitian Gram matrix with log1p,
    so very weak links keep full relative precision.
    """
    h = np.asarray(getattr(h, "H", h), dtype=complex)
    if not np.all(np.isfinite(h)):
        raise ValueError("channel matrix has non-finite entries")
    if gamma <= 0 or m_xt < 1:
        raise ValueError("gamma must be positive and m_xt >= 1")
    gram = (gamma / m_xt) * (h @ h.conj().T)
    lam = np.clip(np.linalg.eigvalsh(gram), 0.0, None)
    return float(np.sum(np.log1p(lam)) / np.log(2.0))


@dataclass
class CapacityCurve:
    R: np.ndarray
    C_fullwave: np.ndarray
    C_reduced: np.ndarray
    theta: float
    gamma_dB: float

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        self.C_fullwave = np.asarray(self.C_fullwave, dtype=float)
        self.C_reduced = np.asarray(self.C_reduced, dtype=float)
        if not (len(self.R) == len(self.C_fullwave) == len(self.C_reduced)):
            raise ValueError("curve columns differ in length")
        if np.any(np.diff(self.R) <= 0):
            raise ValueError("R must be strictly increasing")

    @property
    def relative_gap(self):
        return np.abs(self.C_reduced - self.C_fullwave) / self.C_fullwave


class SweepEngine:
    """Reuses the T/S blocks of one scene while the Rx array moves."""

    def __init__(self, cfg, state=None, theta_deg=None, r0=None):
        self.cfg = cfg
        self.theta = cfg.theta_deg if theta_deg is None else theta_deg
        self.scene = build_scene(cfg, r=cfg.r_lambda if r0 is None else r0, theta_deg=self.theta)
        self.zp = assemble_partitioned(self.scene)
        self.state = state
        self.tx_ports = self.scene.port_indices(TX)

    def scene_at(self, r):
        meshes, r_r = rx_meshes(self.cfg, r, self.theta)
        return self.scene.with_rx(meshes, r_r).check()

    def channels(self, r):
        scene = self.scene_at(r)
        zp = update_receiver_blocks(self.zp, scene)
        ris = None if self.state is None else self.state.loads()
        loads = make_loads(scene, self.cfg.port_load_ohm, ris)
        rx_ports = scene.port_indices(RX)
        return (fullwave_channel(zp, loads, rx_ports, self.tx_ports),
                reduced_channel(zp, loads, rx_ports, self.tx_ports))


def _first_engine(cfg, state, theta_deg, r_list, skip_overlaps):
    for r in r_list:
        try:
            return SweepEngine(cfg, state, theta_deg, r0=float(r))
        except GeometryError:
            if not skip_overlaps:
                raise
    raise GeometryError("the Rx array overlaps another conductor at every R")


def sweep_distance(cfg, state, r_list, theta_deg=None, gamma_db=None, engine=None,
                   skip_overlaps=False):
    """Full-wave and reduced capacity at each Rx distance in ``r_list``.

    An Rx array that touches another conductor raises ``GeometryError``
    unless ``skip_overlaps`` is set, in which case that R is dropped.
    """
    r_list = np.asarray(r_list, dtype=float)
    if len(r_list) == 0:
        raise ValueError("empty R list")
    if np.any(r_list <= 0.5) or np.any(r_list > 200.0):
        raise ValueError("R values must lie in (0.5, 200] wavelengths")
    gamma_db = cfg.gamma_db if gamma_db is None else gamma_db
    gamma = 10.0 ** (gamma_db / 10.0)
    if engine is None:
        engine = _first_engine(cfg, state, theta_deg, r_list, skip_overlaps)
    kept, c_full, c_red = [], [], []
    for r in r_list:
        try:
            h_full, h_red = engine.channels(r)
        except GeometryError as exc:
            if not skip_overlaps:
                raise
            log.warning("skipping R=%g: %s", r, exc)
            continue
        kept.append(r)
        c_full.append(capacity(h_full, gamma, cfg.m_xt))
        c_red.append(capacity(h_red, gamma, cfg.m_xt))
        log.debug("R=%g C_full=%.6g C_red=%.6g", r, c_full[-1], c_red[-1])
    return CapacityCurve(kept, c_full, c_red, engine.theta, gamma_db)


def fit_pathloss_exponent(curve, r_min_fit, column="C_fullwave", r_max_fit=np.inf):
    """Least-squares slope of log(2^C - 1) against log R for R >= r_min_fit."""
    r = curve.R
    c = np.asarray(getattr(curve, column), dtype=float)
    sel = (r >= r_min_fit) & (r <= r_max_fit)
    if np.count_nonzero(sel) < 5:
        raise ValueError(f"need >= 5 samples with R >= {r_min_fit}, got {np.count_nonzero(sel)}")
    if np.any(c[sel] <= 0):
        raise ValueError("capacities in the fit window must be positive")
    snr = np.expm1(c[sel] * np.log(2.0))
    slope, _ = np.polyfit(np.log(r[sel]), np.log(snr), 1)
    return float(slope)


def steering_decay_check(cfg, r_list, theta_deg=None):
    """||Z_RS(R)||_F * R over ``r_list`` and its max/min flatness ratio."""
    r_list = np.asarray(r_list, dtype=float)
    if np.any(r_list < 10.0):
        raise ValueError("steering decay check needs R >= 10 wavelengths")
    theta = cfg.theta_deg if theta_deg is None else theta_deg
    scaled = []
    for r in r_list:
        scene = build_scene(cfg, r=r, theta_deg=theta)
        z_rs = impedance_block(scene, scene.group_indices(RX), scene.group_indices(RIS))
        scaled.append(float(np.linalg.norm(z_rs) * r))
    scaled = np.asarray(scaled)
    return {"R": r_list, "norm_times_R": scaled, "flatness": float(scaled.max() / scaled.min())}


def write_curve_csv(curve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_COLUMNS)
        for r, cf, cr in zip(curve.R, curve.C_fullwave, curve.C_reduced):
            w.writerow([f"{r:.9g}", f"{cf:.12e}", f"{cr:.12e}", f"{curve.theta:.6g}",
                        f"{curve.gamma_dB:.6g}"])


def read_curve_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    data = np.array([[float(v) for v in row] for row in rows])
    return CapacityCurve(data[:, 0], data[:, 1], data[:, 2], data[0, 3], data[0, 4])
