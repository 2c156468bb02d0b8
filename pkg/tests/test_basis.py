"""Basis families, pointwise evaluation, and L^p norms."""

import math

import numpy as np
import pytest
from scipy import special

from crlab.basis import (
    HOLOMORPHIC,
    RADIAL,
    Grid2D,
    eigenspace,
    eval_basis,
    family_from_label,
    hermite_polyparts,
    laguerre_weighted,
    laguerre_weighted_single,
    lp_norm,
    norm_decay_study,
)


def test_family_labels_round_trip():
    for fam in (HOLOMORPHIC, RADIAL, eigenspace(3)):
        assert family_from_label(fam.label) == fam
    assert family_from_label("hol") == HOLOMORPHIC
    assert family_from_label("rad") == RADIAL
    with pytest.raises(ValueError):
        family_from_label("fourier")


def test_hermite_polyparts_matches_scipy():
    x = np.linspace(-5.0, 5.0, 101)
    table = hermite_polyparts(6, x)
    for n in range(7):
        # envelope-free part: H_n(x) / sqrt(2^n n! sqrt(pi))
        ref = special.eval_hermite(n, x) / math.sqrt(2.0 ** n * math.factorial(n) * math.sqrt(math.pi))
        assert np.allclose(table[n], ref, rtol=1e-12, atol=1e-12)


def test_hermite_orthonormality_by_quadrature():
    nodes, weights = np.polynomial.hermite.hermgauss(40)
    table = hermite_polyparts(8, nodes)
    gram = (table * weights) @ table.T
    assert np.allclose(gram, np.eye(9), atol=1e-12)


def test_laguerre_weighted_orthonormality():
    # int_0^inf psi_j psi_k du = delta_jk for psi_k = L_k e^{-u/2}
    nodes, weights = special.roots_laguerre(60)
    table = laguerre_weighted(10, nodes)
    gram = (table * (weights * np.exp(nodes))) @ table.T
    assert np.allclose(gram, np.eye(11), atol=1e-10)


def test_laguerre_weighted_single_matches_table():
    u = np.linspace(0.0, 40.0, 50)
    table = laguerre_weighted(5, u)
    for n in range(6):
        assert np.allclose(laguerre_weighted_single(n, u), table[n], atol=1e-12)


def test_eval_basis_ground_state_agrees_across_families():
    x = np.linspace(-2.0, 2.0, 9)
    xx, yy = np.meshgrid(x, x, indexing="ij")
    ref = np.exp(-(xx ** 2 + yy ** 2) / 2.0) / math.sqrt(math.pi)
    for fam in (HOLOMORPHIC, RADIAL, eigenspace(0)):
        vals = eval_basis(fam, 0, xx, yy)
        assert np.allclose(vals, ref, atol=1e-13)


def test_eval_basis_holomorphic_angular_phase():
    # phi_n^hol carries the e^{i n theta} angular factor
    r, n = 1.3, 4
    theta = np.linspace(0.0, 2.0 * math.pi, 7, endpoint=False)
    vals = eval_basis(HOLOMORPHIC, n, r * np.cos(theta), r * np.sin(theta))
    rotated = vals * np.exp(-1j * n * theta)
    assert np.allclose(rotated, rotated[0], atol=1e-12)
    assert abs(vals[0]) > 0


def test_grid2d_axis_and_refinement():
    g = Grid2D(4.0, 64)
    ax = g.axis()
    assert len(ax) == 64
    assert math.isclose(ax[1] - ax[0], g.spacing)
    fine = g.refined()
    assert fine.npoints > g.npoints


def test_lp_norms_ground_state_anchors():
    for fam in (HOLOMORPHIC, RADIAL, eigenspace(0)):
        assert lp_norm(fam, 0, 2) == pytest.approx(1.0, abs=1e-9)
        assert lp_norm(fam, 0, 4) == pytest.approx((2.0 * math.pi) ** -0.25, abs=1e-9)
        assert lp_norm(fam, 0, math.inf) == pytest.approx(math.pi ** -0.5, abs=1e-9)


def test_lp_norm_unit_mass_higher_modes():
    for fam in (HOLOMORPHIC, RADIAL, eigenspace(5)):
        n = 5 if fam.label.startswith("eigenspace") else 7
        assert lp_norm(fam, n, 2) == pytest.approx(1.0, abs=1e-8)


def test_radial_l4_exact_path_matches_grid():
    # even p on the radial chain integrates the Laguerre form exactly
    exact = lp_norm(RADIAL, 6, 4)
    grid = lp_norm(RADIAL, 6, 4, npoints=4096)
    assert exact == pytest.approx(grid, rel=1e-6)


def test_norm_decay_study_exponent():
    out = norm_decay_study(HOLOMORPHIC, math.inf, [16, 32, 64, 128])
    assert out["exponent"] == pytest.approx(-0.25, abs=0.02)
    assert out["r2"] > 0.999
    assert out["log_coeff"] is None
    assert len(out["norms"]) == 4


def test_norm_decay_study_log_correction_term():
    out = norm_decay_study(RADIAL, 4, [16, 32, 64, 128], log_correction=True)
    assert out["log_coeff"] is not None
    assert out["exponent"] == pytest.approx(-0.25, abs=0.06)


def test_norm_decay_study_rejects_short_input():
    with pytest.raises(ValueError):
        norm_decay_study(HOLOMORPHIC, 2, [8])
    with pytest.raises(ValueError):
        norm_decay_study(HOLOMORPHIC, 2, [8, 16], log_correction=True)
