"""Channel matrices from a partitioned impedance matrix.

Open-circuited ports (load ``np.inf``) are handled by exact elimination: the
corresponding basis carries no current, so its row and column are dropped
before any inverse is formed.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .em_kernel import LoadMatrices

log = logging.getLogger(__name__)

FULLWAVE = "FULLWAVE"
REDUCED = "REDUCED"
COND_WARN = 1e12


class NumericalError(RuntimeError):
    pass


def _factor(matrix, name):
    """LU-factor ``matrix`` with a reciprocal-condition check."""
    if matrix.shape[0] == 0:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("error", linalg.LinAlgWarning)
        try:
            lu = linalg.lu_factor(matrix, check_finite=True)
        except (linalg.LinAlgError, linalg.LinAlgWarning, ValueError) as exc:
            raise NumericalError(f"cannot factor {name}: {exc}") from exc
    gecon, = linalg.get_lapack_funcs(("gecon",), (lu[0],))
    rcond, info = gecon(lu[0], np.linalg.norm(matrix, 1), norm="1")
    if rcond == 0.0 or not np.isfinite(rcond):
        raise NumericalError(f"{name} is singular (condition estimate inf)")
    if 1.0 / rcond > COND_WARN:
        log.warning("%s is ill-conditioned (condition estimate %.3e)", name, 1.0 / rcond)
    return lu


def _solve(lu, rhs):
    if lu is None:
        return np.zeros_like(rhs)
    return linalg.lu_solve(lu, rhs)


def _inv(matrix, name):
    return _solve(_factor(matrix, name), np.eye(matrix.shape[0], dtype=complex))


@dataclass(frozen=True)
class ChannelMatrix:
    """Port-to-port voltage gains: rows are Rx ports, columns Tx ports."""
    H: np.ndarray
    kind: str
    full: np.ndarray | None = None  # all R bases x all T bases

    def __post_init__(self):
        if not np.all(np.isfinite(self.H)):
            raise NumericalError("channel matrix has non-finite entries")


@dataclass(frozen=True)
class RISStateMatrix:
    Phi: np.ndarray


def _open_mask(diag):
    return np.isinf(np.abs(diag))


def eliminate_open(zp, loads):
    """Drop open-circuited S bases; returns (zp, loads, kept S indices)."""
    if np.any(_open_mask(loads.zl_tt)) or np.any(_open_mask(loads.zl_rr)):
        raise ValueError("open-circuit loads are only supported on RIS bases")
    keep = np.flatnonzero(~_open_mask(loads.zl_ss))
    if len(keep) == len(loads.zl_ss):
        return zp, loads, keep
    s = keep
    reduced = zp.replace(Z_TS=zp.Z_TS[:, s], Z_RS=zp.Z_RS[:, s], Z_ST=zp.Z_ST[s],
                         Z_SR=zp.Z_SR[s], Z_SS=zp.Z_SS[np.ix_(s, s)])
    return reduced, LoadMatrices(loads.zl_tt, loads.zl_rr, loads.zl_ss[s]), keep


def dense_solve_reference(zp, loads, v_t):
    """Solve (Z + Z^L) I = V with V zero on every R and S basis."""
    n_t, n_r, n_s = zp.sizes
    v_t = np.asarray(v_t, dtype=complex)
    red, rl, keep = eliminate_open(zp, loads)
    z = red.full()
    z[np.diag_indices_from(z)] += np.concatenate([rl.zl_tt, rl.zl_rr, rl.zl_ss])
    rhs = np.zeros(z.shape[0], dtype=complex)
    rhs[:n_t] = v_t
    i = _solve(_factor(z, "Z + Z^L"), rhs)
    i_s = np.zeros(n_s, dtype=complex)
    i_s[keep] = i[n_t + n_r:]
    return i[:n_t], i[n_t:n_t + n_r], i_s


def extract_ports(h_full, rx_ports, tx_ports):
    return h_full[np.ix_(rx_ports, tx_ports)]


class _Admittance:
    """Blocks of Y = (Z')^-1, where Z' is Z with the Tx loads embedded."""

    def __init__(self, zp, loads):
        n_t, n_r, _ = zp.sizes
        zprime = zp.full()
        idx = np.arange(n_t)
        zprime[idx, idx] += loads.zl_tt
        y = _inv(zprime, "Z' (Tx loads embedded)")
        t, r, s = slice(0, n_t), slice(n_t, n_t + n_r), slice(n_t + n_r, None)
        self.blocks = {a + b: y[sa, sb] for a, sa in (("T", t), ("R", r), ("S", s))
                       for b, sb in (("T", t), ("R", r), ("S", s))}

    def __getitem__(self, key):
        return self.blocks[key]


def _scatterer_terms(y, zl_ss):
    """Y_RS Z^L_SS (U + Y_SS Z^L_SS)^-1 as an (N_R x N_S) matrix."""
    n_s = len(zl_ss)
    d_s = np.eye(n_s) + y["SS"] * zl_ss[None, :]
    # (Y_RS Z^L_SS) D^-1 = (D^-T (Y_RS Z^L_SS)^T)^T
    yz = y["RS"] * zl_ss[None, :]
    lu = _factor(d_s.T, "U + Y_SS Z^L_SS")
    return _solve(lu, yz.T).T


def fullwave_channel(zp, loads, rx_ports=None, tx_ports=None):
    """Exact voltage transfer from the Tx bases to the Rx loads.

    Follows the elimination order: RIS currents in terms of (V_T, I_R), then
    the Rx currents, then the Rx voltages across Z^L_RR. Without port index
    arrays the full N_R x N_T matrix is returned as ``H``.
    """
    zp, loads, _ = eliminate_open(zp, loads)
    y = _Admittance(zp, loads)
    zl_rr = loads.zl_rr
    n_r = len(zl_rr)
    w = _scatterer_terms(y, loads.zl_ss)  # Y_RS ZL_SS (U + Y_SS ZL_SS)^-1
    b = y["RT"] - w @ y["ST"]
    a = np.eye(n_r) + y["RR"] * zl_rr[None, :]
    c = (w @ y["SR"]) * zl_rr[None, :]
    lu_a = _factor(a, "U + Y_RR Z^L_RR")
    a_inv_b = _solve(lu_a, b)
    a_inv_c = _solve(lu_a, c)
    i_r = _solve(_factor(np.eye(n_r) - a_inv_c, "U - (U + Y_RR Z^L_RR)^-1 C"), a_inv_b)
    h_full = zl_rr[:, None] * i_r
    if rx_ports is None:
        return ChannelMatrix(h_full, FULLWAVE, h_full)
    return ChannelMatrix(extract_ports(h_full, rx_ports, tx_ports), FULLWAVE, h_full)


def ris_state_matrix(z_ss, zl_ss):
    """(Z_SS + Z^L_SS)^-1; infinite loads are taken as exact open circuits."""
    zl_ss = np.asarray(zl_ss, dtype=complex)
    if np.any(_open_mask(zl_ss)):
        return open_circuit_state(z_ss, np.flatnonzero(_open_mask(zl_ss)),
                                  np.where(_open_mask(zl_ss), 0.0, zl_ss))
    m = np.array(z_ss, dtype=complex)
    m[np.diag_indices_from(m)] += zl_ss
    return RISStateMatrix(_inv(m, "Z_SS + Z^L_SS"))


def open_circuit_state(z_ss, open_ports, zl_ss=None):
    """Exact Z_L -> inf limit of the state matrix at ``open_ports``.

    Open rows/columns are removed, the remaining block (with its own finite
    loads, zero by default) is inverted and re-embedded with zeros.
    """
    n = z_ss.shape[0]
    open_ports = np.unique(np.asarray(open_ports, dtype=np.intp))
    if np.any(open_ports < 0) or np.any(open_ports >= n):
        raise IndexError("open port index out of range")
    keep = np.setdiff1d(np.arange(n), open_ports)
    phi = np.zeros((n, n), dtype=complex)
    if len(keep) == 0:
        warnings.warn("every RIS basis is open-circuited; state matrix is zero", stacklevel=2)
        return RISStateMatrix(phi)
    m = np.array(z_ss[np.ix_(keep, keep)], dtype=complex)
    if zl_ss is not None:
        m[np.diag_indices_from(m)] += np.asarray(zl_ss, dtype=complex)[keep]
    phi[np.ix_(keep, keep)] = _inv(m, "passive block of Z_SS")
    return RISStateMatrix(phi)


def reduced_factors(zp, loads):
    """The three factors of the cascaded model.

    Returns (Z^L_RR (Z_RR + Z^L_RR)^-1, -Z_RT + Z_RS Phi_S Z_ST,
    (Z_TT + Z^L_TT)^-1).
    """
    rr = zp.Z_RR + np.diag(loads.zl_rr)
    tt = zp.Z_TT + np.diag(loads.zl_tt)
    rx = loads.zl_rr[:, None] * _inv(rr, "Z_RR + Z^L_RR")
    tx = _inv(tt, "Z_TT + Z^L_TT")
    phi = ris_state_matrix(zp.Z_SS, loads.zl_ss).Phi
    mid = -zp.Z_RT + zp.Z_RS @ phi @ zp.Z_ST
    return rx, mid, tx


def reduced_channel(zp, loads, rx_ports=None, tx_ports=None):
    """Cascaded channel neglecting Tx/Rx/RIS back-coupling."""
    rx, mid, tx = reduced_factors(zp, loads)
    h_full = rx @ mid @ tx
    if rx_ports is None:
        return ChannelMatrix(h_full, REDUCED, h_full)
    return ChannelMatrix(extract_ports(h_full, rx_ports, tx_ports), REDUCED, h_full)


def spectral_radius(m):
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(linalg.eigvals(m))))


def spectral_radius_diagnostic(zp, loads):
    """Spectral radii of the Neumann-series candidates in the exact channel.

    rho_S is for Y_SS Z^L_SS, rho_R for
    Y_RS Z^L_SS (U + Y_SS Z^L_SS)^-1 Y_SR Z^L_RR and rho_RR for Y_RR Z^L_RR.
    Values are reported, never asserted.
    """
    zp, loads, _ = eliminate_open(zp, loads)
    y = _Admittance(zp, loads)
    w = _scatterer_terms(y, loads.zl_ss)
    return {
        "rho_R": spectral_radius((w @ y["SR"]) * loads.zl_rr[None, :]),
        "rho_S": spectral_radius(y["SS"] * loads.zl_ss[None, :]),
        "rho_RR": spectral_radius(y["RR"] * loads.zl_rr[None, :]),
    }


def write_channel_csv(ch, path):
    n_tx = ch.H.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rx_port"] + [f"tx{j} (V/V re,im)" for j in range(n_tx)])
        for i, row in enumerate(ch.H):
            w.writerow([i] + [f"{c.real:.12e},{c.imag:.12e}" for c in row])


def read_channel_csv(path, kind=FULLWAVE):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    h = np.array([[complex(*map(float, cell.split(","))) for cell in row[1:]] for row in rows])
    return ChannelMatrix(h, kind)


def write_report_csv(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "value"])
        for key, value in report.items():
            w.writerow([key, value if isinstance(value, str) else f"{value:.12g}"])
