import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rischannel.config import ScenarioConfig
from rischannel.geometry import (RIS, RX, TX, GeometryError, build_scene, far_field_distance,
                                 mesh_dipole, mesh_loop, ris_centers, rx_center,
                                 segment_distance, write_mesh_csv)


def test_dipole_mesh_seven_unknowns():
    m = mesh_dipole(0.5, 0.01, 7, axis=(1.0, 0.0, 0.0))
    assert len(m.bases) == 7
    assert m.n_segments == 8
    np.testing.assert_allclose(np.linalg.norm(m.ends - m.starts, axis=1), 0.5 / 8, rtol=1e-12)
    np.testing.assert_allclose(m.radii, 0.0025)
    assert m.port_basis_index == 3
    # port node sits at the centre
    a, b = m.bases[3].segment_pair
    np.testing.assert_allclose(m.ends[a], [0.0, 0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(m.starts[b], [0.0, 0.0, 0.0], atol=1e-15)


def test_dipole_minimal_mesh():
    m = mesh_dipole(0.5, 0.01, 3)
    assert len(m.bases) == 3 and m.port_basis_index == 1
    assert sum(b.is_port for b in m.bases) == 1


@pytest.mark.parametrize("n", [8, 2, 1])
def test_dipole_rejects_bad_counts(n):
    with pytest.raises(GeometryError):
        mesh_dipole(0.5, 0.01, n)


def test_dipole_rejects_nonpositive_length():
    with pytest.raises(GeometryError):
        mesh_dipole(0.0, 0.01, 7)


def test_loop_mesh_counts_and_perimeter():
    m = mesh_loop(0.4, 0.4, 0.01, 3)
    assert m.n_segments == 12 and len(m.bases) == 12
    assert sum(b.is_port for b in m.bases) == 1
    perim = np.linalg.norm(m.ends - m.starts, axis=1).sum()
    assert abs(perim - 1.6) < 1e-12
    # closed: every segment end is the next segment start
    np.testing.assert_allclose(m.ends, np.roll(m.starts, -1, axis=0), atol=1e-15)


def test_loop_port_at_side_midpoint():
    m = mesh_loop(0.4, 0.3, 0.01, 4, center=(1.0, 2.0, 0.0))
    a, _ = m.bases[m.port_basis_index].segment_pair
    node = m.ends[a]
    np.testing.assert_allclose(node, [1.0 - 0.2, 2.0, 0.0], atol=1e-12)


def test_loop_rejects_degenerate():
    with pytest.raises(GeometryError):
        mesh_loop(0.4, 0.4, 0.01, 1)
    with pytest.raises(GeometryError):
        mesh_loop(-0.4, 0.4, 0.01, 3)


def test_default_dipole_scene_counts():
    scene = build_scene(ScenarioConfig())
    assert len(scene.ris_meshes) == 121
    assert len(scene.tx_meshes) == 2 and len(scene.rx_meshes) == 2
    n_t, n_r, n_s = scene.counts
    assert (n_t, n_r, n_s) == (14, 14, 121 * 7)
    assert n_t + n_r + n_s == scene.n_bases
    assert scene.basis_is_port.sum() == 2 + 2 + 121


def test_ris_grid_centred_at_origin():
    for kind in ("dipole", "loop"):
        scene = build_scene(ScenarioConfig(element_kind=kind, m_x=4, m_y=3))
        centres = np.array([m.center for m in scene.ris_meshes])
        np.testing.assert_allclose(centres.mean(axis=0), 0.0, atol=1e-9)
        assert np.all(centres[:, 2] == 0.0)


def test_ris_centers_row_major():
    c = ris_centers(3, 2, 0.5, 0.7)
    np.testing.assert_allclose(c[:3, 1], -0.35)
    np.testing.assert_allclose(c[:3, 0], [-0.5, 0.0, 0.5])


def test_rx_center_broadside():
    np.testing.assert_allclose(rx_center(5.0, 0.0), [0.0, 0.0, 5.0], atol=1e-15)
    np.testing.assert_allclose(rx_center(2.0, 30.0), [1.0, 0.0, np.sqrt(3.0)], atol=1e-15)


def test_rx_overlapping_tx_rejected():
    with pytest.raises(GeometryError, match="overlapping"):
        build_scene(ScenarioConfig(m_x=3, m_y=3), r=5.0, theta_deg=0.0)


def test_conductor_below_ground_rejected():
    cfg = ScenarioConfig(m_x=1, m_y=1, tx_position_lambda=(0.0, 0.0, -1.0))
    with pytest.raises(GeometryError, match="ground"):
        build_scene(cfg)


def test_scene_deterministic():
    cfg = ScenarioConfig(m_x=3, m_y=3)
    a, b = build_scene(cfg), build_scene(cfg)
    assert np.array_equal(a.seg_start, b.seg_start) and np.array_equal(a.seg_end, b.seg_end)
    assert np.array_equal(a.basis_segments, b.basis_segments)


def _segment_set(starts, ends):
    """Rows of sorted endpoint pairs, sorted, so orientation and order drop out."""
    a, b = np.round(starts, 12), np.round(ends, 12)
    swap = np.array([tuple(x) > tuple(y) for x, y in zip(a, b)])
    lo = np.where(swap[:, None], b, a)
    hi = np.where(swap[:, None], a, b)
    rows = np.hstack([lo, hi])
    return rows[np.lexsort(rows.T[::-1])]


def test_scene_mirror_symmetric_in_x():
    scene = build_scene(ScenarioConfig(m_x=5, m_y=3), r=20.0, theta_deg=0.0)
    flip = np.array([-1.0, 1.0, 1.0])
    np.testing.assert_allclose(_segment_set(scene.seg_start, scene.seg_end),
                               _segment_set(scene.seg_start * flip, scene.seg_end * flip),
                               atol=1e-12)


def test_group_partition_order():
    scene = build_scene(ScenarioConfig(m_x=2, m_y=2))
    g = scene.basis_group
    n_t, n_r, _ = scene.counts
    assert np.all(g[:n_t] == TX) and np.all(g[n_t:n_t + n_r] == RX)
    assert np.all(g[n_t + n_r:] == RIS)
    assert list(scene.port_indices(TX)) == [3, 10]


def test_far_field_distance():
    cfg = ScenarioConfig()
    d2 = (10 * 0.5 + 0.01) ** 2 + (10 * 0.7 + 0.5) ** 2
    assert abs(far_field_distance(cfg) - 2 * d2) < 1e-12


def test_mesh_csv(tmp_path):
    scene = build_scene(ScenarioConfig(m_x=1, m_y=1))
    path = tmp_path / "mesh.csv"
    write_mesh_csv(scene, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("x1_lambda,y1_lambda,z1_lambda")
    assert len(lines) == 1 + len(scene.seg_radius)


points = st.lists(st.floats(-2, 2, allow_nan=False), min_size=12, max_size=12)


@settings(max_examples=60, deadline=None)
@given(points)
def test_segment_distance_matches_sampling(v):
    p0, p1, q0, q1 = (np.array(v[i:i + 3]) for i in range(0, 12, 3))
    d = float(segment_distance(p0, p1, q0, q1))
    t = np.linspace(0.0, 1.0, 201)
    a = p0 + t[:, None] * (p1 - p0)
    b = q0 + t[:, None] * (q1 - q0)
    brute = np.linalg.norm(a[:, None] - b[None], axis=-1).min()
    assert d <= brute + 1e-9
    # sampling step bounds how far above the true minimum the brute value can be
    step = (np.linalg.norm(p1 - p0) + np.linalg.norm(q1 - q0)) / 200
    assert brute - d <= step + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.floats(0.3, 1.0), st.floats(0.3, 1.0))
def test_grid_centre_property(m_x, m_y, d_x, d_y):
    c = ris_centers(m_x, m_y, d_x, d_y)
    assert c.shape == (m_x * m_y, 3)
    np.testing.assert_allclose(c.mean(axis=0), 0.0, atol=1e-9)


def test_segment_distance_degenerate_points():
    o = np.zeros(3)
    p = np.array([3.0, 4.0, 0.0])
    assert float(segment_distance(o, o, p, p)) == pytest.approx(5.0)
    # point against a segment
    assert float(segment_distance(p, p, o, np.array([6.0, 0.0, 0.0]))) == pytest.approx(4.0)
    assert float(segment_distance(o, np.array([6.0, 0.0, 0.0]), p, p)) == pytest.approx(4.0)
