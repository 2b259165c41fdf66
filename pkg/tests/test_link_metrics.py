import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import unitary_group

from rischannel.config import ScenarioConfig
from rischannel.em_kernel import impedance_block
from rischannel.geometry import GeometryError, build_scene
from rischannel.link_metrics import (CURVE_COLUMNS, CapacityCurve, capacity,
                                     fit_pathloss_exponent, read_curve_csv,
                                     steering_decay_check, sweep_distance, write_curve_csv)
from rischannel.ris_design import default_unit_cell_phases, optimize_binary_states

from conftest import free_scene, single_basis


def rand_h(rng, m=2, n=2):
    return rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))


def synthetic_curve(power, r=None, gamma=10.0):
    """Capacity of H(R) = H0 / R**power with a rank-one H0 (exact power law)."""
    rng = np.random.default_rng(5)
    u, v = rng.standard_normal(2) + 1j * rng.standard_normal(2), rng.standard_normal(2) + 0j
    h0 = 3.0 * np.outer(u / np.linalg.norm(u), v / np.linalg.norm(v))
    r = np.linspace(40.0, 120.0, 9) if r is None else r
    c = [capacity(h0 / x ** power, gamma, 2) for x in r]
    return CapacityCurve(r, c, c, 30.0, 10.0)


def test_capacity_closed_forms():
    assert capacity(np.zeros((2, 2)), 10.0, 2) == 0.0
    assert capacity(np.eye(2), 1.0, 2) == pytest.approx(2 * np.log2(1.5), rel=1e-14)
    u = np.array([1.0, 1.0j]) / np.sqrt(2)
    v = np.array([0.6, 0.8])
    assert capacity(np.outer(u, v.conj()), 3.0, 1) == pytest.approx(2.0, rel=1e-14)


def test_capacity_matches_slogdet():
    rng = np.random.default_rng(0)
    h = rand_h(rng, 3, 2)
    _, logdet = np.linalg.slogdet(np.eye(3) + 5.0 / 2 * h @ h.conj().T)
    assert capacity(h, 5.0, 2) == pytest.approx(logdet / np.log(2), rel=1e-12)


def test_capacity_errors():
    with pytest.raises(ValueError):
        capacity(np.array([[np.inf]]), 1.0, 1)
    with pytest.raises(ValueError):
        capacity(np.eye(2), 0.0, 1)
    with pytest.raises(ValueError):
        capacity(np.eye(2), 1.0, 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3), st.floats(1.0, 10.0))
def test_capacity_monotone_in_gamma(seed, gamma, factor):
    h = rand_h(np.random.default_rng(seed))
    assert capacity(h, gamma * factor, 2) >= capacity(h, gamma, 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_capacity_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    h = rand_h(rng, 3, 3)
    ul = unitary_group.rvs(3, random_state=rng)
    ur = unitary_group.rvs(3, random_state=rng)
    c0 = capacity(h, 4.0, 3)
    assert capacity(ul @ h @ ur, 4.0, 3) == pytest.approx(c0, rel=1e-10)


@pytest.mark.parametrize("power,expected", [(1, -2.0), (2, -4.0)])
def test_synthetic_exponents(power, expected):
    assert abs(fit_pathloss_exponent(synthetic_curve(power), 40.0) - expected) < 1e-6


def test_fit_needs_five_samples():
    curve = synthetic_curve(1, r=np.array([10.0, 20.0, 40.0, 60.0, 80.0, 100.0]))
    with pytest.raises(ValueError, match=">= 5"):
        fit_pathloss_exponent(curve, 50.0)


def test_curve_invariants():
    with pytest.raises(ValueError):
        CapacityCurve([1.0, 1.0], [0.1, 0.1], [0.1, 0.1], 0.0, 20.0)
    with pytest.raises(ValueError):
        CapacityCurve([1.0, 2.0], [0.1], [0.1, 0.2], 0.0, 20.0)


def test_curve_csv_roundtrip(tmp_path):
    curve = synthetic_curve(1)
    path = tmp_path / "c.csv"
    write_curve_csv(curve, path)
    assert path.read_text().splitlines()[0] == ",".join(CURVE_COLUMNS)
    back = read_curve_csv(path)
    np.testing.assert_allclose(back.C_fullwave, curve.C_fullwave, rtol=1e-12)
    np.testing.assert_array_equal(back.R, curve.R)


def test_point_source_decay():
    src = single_basis((0.0, 0.0, 0.0), half=0.05, group="RIS")
    values = []
    for r in (10.0, 20.0, 50.0, 100.0):
        th = np.deg2rad(30.0)
        rx = single_basis((r * np.sin(th), 0.0, r * np.cos(th)), half=0.05, group="RX")
        scene = free_scene(rx=[rx], ris=[src])
        values.append(abs(impedance_block(scene, [0], [1])[0, 0]) * r)
    values = np.array(values)
    assert values.max() / values.min() < 1.02


def test_steering_decay_default_ris():
    cfg = ScenarioConfig()
    rep = steering_decay_check(cfg, [20.0, 40.0, 80.0, 160.0])
    norms = rep["norm_times_R"] / rep["R"]
    assert abs(norms[1] / norms[0] - 0.5) < 0.05
    assert abs(norms[2] / norms[1] - 0.5) < 0.05
    assert np.isfinite(rep["flatness"]) and rep["flatness"] >= 1.0
    with pytest.raises(ValueError):
        steering_decay_check(cfg, [5.0, 20.0])


def test_sweep_rejects_overlap_unless_skipping():
    cfg = ScenarioConfig(m_x=3, m_y=3, theta_deg=0.0)
    with pytest.raises(GeometryError):
        sweep_distance(cfg, None, [4.0, 5.0, 6.0])
    curve = sweep_distance(cfg, None, [5.0, 6.0, 8.0], skip_overlaps=True)
    np.testing.assert_array_equal(curve.R, [6.0, 8.0])


def test_sweep_range_checked():
    cfg = ScenarioConfig(m_x=1, m_y=1)
    with pytest.raises(ValueError):
        sweep_distance(cfg, None, [0.5, 2.0])
    with pytest.raises(ValueError):
        sweep_distance(cfg, None, [])


def test_sweep_small_scene_consistency():
    cfg = ScenarioConfig(m_x=3, m_y=3)
    scene = build_scene(cfg)
    state = optimize_binary_states(scene, default_unit_cell_phases("dipole"), 30.0)
    curve = sweep_distance(cfg, state, [10.0, 20.0, 40.0])
    assert np.all(curve.C_fullwave > 0) and np.all(curve.C_reduced > 0)
    assert curve.theta == 30.0 and curve.gamma_dB == 20.0
    # same result with a larger gamma is strictly higher
    hi = sweep_distance(cfg, state, [10.0, 20.0, 40.0], gamma_db=30.0)
    assert np.all(hi.C_fullwave > curve.C_fullwave)


@pytest.mark.slow
def test_segment_convergence():
    """Capacity moves by less than 2% when the dipole mesh goes from 7 to 11 unknowns."""
    caps = {}
    for n in (7, 11):
        cfg = ScenarioConfig(n_segments_dipole=n)
        scene = build_scene(cfg)
        state = optimize_binary_states(scene, default_unit_cell_phases("dipole"), 30.0)
        caps[n] = sweep_distance(cfg, state, [10.0, 20.0, 40.0])
    for col in ("C_fullwave", "C_reduced"):
        a, b = getattr(caps[7], col), getattr(caps[11], col)
        assert np.all(np.abs(a - b) / b < 0.02)
