from __future__ import annotations

import numpy as np
import pytest

from hhgspt.errors import NotOnManifold
from hhgspt.geometry import fold_points_Mh
from hhgspt.local_analysis import (StabilityKind, degenerate_node, hopf_point,
                                   jacobian_finite_difference, jacobian_partial,
                                   node_hopf_distance, point_on_manifold, stability_segments)
from hhgspt.reduction import U_partials_on_manifold
from conftest import at

P20 = at(20)


def test_singular_limit_eigenvalues():
    pt = point_on_manifold(-0.6, P20)
    J = jacobian_partial(pt, 0.0, P20)
    assert sorted(J.eigenvalues.real) == pytest.approx(sorted([J.matrix[0, 0], 0.0]))
    assert np.all(J.matrix[1] == 0)


def test_not_on_manifold():
    v, h, n = point_on_manifold(-0.6, P20)
    with pytest.raises(NotOnManifold):
        jacobian_partial((v, h + 0.01, n), 0.1, P20)


@pytest.mark.parametrize("regime", ["h_slow", "n_slow"])
def test_jacobian_against_finite_differences(regime):
    p = at(20, regime)
    for v in np.linspace(-0.7, 0.2, 20):
        try:
            pt = point_on_manifold(v, p, regime)
        except Exception:
            continue
        if not (0 < pt[1] < 1 and 0 < pt[2] < 1):
            continue
        J = jacobian_partial(pt, 0.1, p, regime)
        fd = jacobian_finite_difference(pt, 0.1, p, regime)
        assert np.allclose(J.matrix, fd, rtol=1e-4, atol=1e-8)
        assert J.trace == pytest.approx(np.trace(fd), rel=1e-4, abs=1e-8)


def test_determinant_flips_at_fold_points():
    for f in fold_points_Mh(P20):
        a = jacobian_partial(point_on_manifold(f.v - 1e-3, P20), 0.1, P20).det
        b = jacobian_partial(point_on_manifold(f.v + 1e-3, P20), 0.1, P20).det
        assert np.sign(a) != np.sign(b)


def test_hopf_point():
    segs = stability_segments(P20, 0.1)
    hv = hopf_point(P20, 0.1)
    assert hv is not None
    J = jacobian_partial(point_on_manifold(hv, P20), 0.1, P20)
    assert abs(J.trace) < 1e-8 and J.det > 0
    below = jacobian_partial(point_on_manifold(hv - 1e-4, P20), 0.1, P20).trace
    above = jacobian_partial(point_on_manifold(hv + 1e-4, P20), 0.1, P20).trace
    assert np.sign(below) != np.sign(above)
    focal = [s for s in segs if s.kind is StabilityKind.FocalAttracting]
    assert any(s.hopf_v == hv for s in focal)


def test_degenerate_node_scales_like_sqrt_eps():
    ratios = [node_hopf_distance(P20, e) / np.sqrt(e) for e in (0.1, 0.025, 0.00625)]
    assert np.all(np.isfinite(ratios))
    assert max(ratios) / min(ratios) < 2
    dv = degenerate_node(P20, 0.1)
    J = jacobian_partial(point_on_manifold(dv, P20), 0.1, P20)
    assert abs(J.discriminant) < 1e-8 and J.trace < 0


def test_no_focal_segments_at_zero_eps():
    kinds = {s.kind for s in stability_segments(P20, 0.0)}
    assert StabilityKind.FocalAttracting not in kinds
    assert StabilityKind.FocalRepelling not in kinds


def test_grid_refinement_invariance():
    g1 = np.linspace(-0.76, 0.49, 1251)
    g2 = np.linspace(-0.76, 0.49, 2501)
    a = stability_segments(P20, 0.1, v_grid=g1)
    b = stability_segments(P20, 0.1, v_grid=g2)
    assert [s.kind for s in a] == [s.kind for s in b]
    for x, y in zip(a, b):
        assert abs(x.v_interval[1] - y.v_interval[1]) < 1e-4


def test_first_row_depends_on_eps():
    for v in np.linspace(-0.7, -0.1, 7):
        pt = point_on_manifold(v, P20)
        with_eps = U_partials_on_manifold(*pt, P20, 0.1, "h_slow")[1]
        without = U_partials_on_manifold(*pt, P20, 0.0, "h_slow")[1]
        assert abs(with_eps - without) >= 1e-3


def test_n_slow_segments():
    p = at(20, "n_slow")
    assert hopf_point(p, 0.1, "n_slow") is not None
