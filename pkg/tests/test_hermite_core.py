import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial.hermite_e import hermegauss

from landau_hermite import hermite_core as hc


def random_tensor(degree, seed):
    rng = np.random.default_rng(seed)
    trunc = hc.Truncation(degree)
    return hc.CoeffTensor(trunc, rng.standard_normal(trunc.modes))


# -- ordering -----------------------------------------------------------------


def test_mode_count_matches_simplex_formula():
    for n in range(9):
        assert hc.Truncation(n).modes == (n + 1) * (n + 2) * (n + 3) // 6


def test_ordering_is_graded_and_complete():
    o = hc.ordering(5)
    assert o.orders.tolist() == sorted(o.orders.tolist())
    seen = {tuple(row) for row in o.alphas.tolist()}
    expect = {
        (a, b, c)
        for a in range(6)
        for b in range(6)
        for c in range(6)
        if a + b + c <= 5
    }
    assert seen == expect


def test_index_lookup_roundtrip():
    o = hc.ordering(7)
    for i, alpha in enumerate(o.alphas.tolist()):
        assert o.index_of(tuple(alpha)) == i
    with pytest.raises(KeyError):
        o.index_of((8, 0, 0))


def test_level_slices_partition_modes():
    o = hc.ordering(6)
    total = sum(sl.stop - sl.start for sl in o.level_slices)
    assert total == o.modes
    for k, sl in enumerate(o.level_slices):
        assert (o.orders[sl] == k).all()


# -- ladder algebra -----------------------------------------------------------


def test_raise_lower_coefficients():
    g = hc.basis_tensor(hc.Truncation(4), (1, 2, 0))
    assert hc.raise_mode(g, 1).coeff((1, 3, 0)) == pytest.approx(math.sqrt(3))
    assert hc.lower_mode(g, 1).coeff((1, 1, 0)) == pytest.approx(math.sqrt(2))
    assert hc.lower_mode(g, 2).norm_sq == 0.0


def test_lower_annihilates_ground_state():
    psi0 = hc.basis_tensor(hc.Truncation(0), (0, 0, 0))
    for axis in range(3):
        assert hc.lower_mode(psi0, axis).norm_sq == 0.0


@given(st.integers(0, 5), st.integers(0, 2), st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_raising_adjoint_to_lowering(degree, axis, seed):
    """<A_+ u, w> = <u, A_- w> for w one degree above u."""
    u = random_tensor(degree, seed)
    w = random_tensor(degree + 1, seed + 1)
    lhs = hc.dot(hc.raise_mode(u, axis), w)
    rhs = hc.dot(u, hc.lower_mode(w, axis))
    assert lhs == pytest.approx(rhs, rel=1e-13, abs=1e-13)


@given(st.integers(0, 5), st.integers(0, 2), st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_ladder_commutator_is_identity(degree, axis, seed):
    """[A_-, A_+] = 1 on each axis."""
    u = random_tensor(degree, seed)
    ad = hc.lower_mode(hc.raise_mode(u, axis), axis)
    da = hc.raise_mode(hc.lower_mode(u, axis), axis)
    diff = ad - da - u
    assert diff.norm_sq == pytest.approx(0.0, abs=1e-24)


def test_mixed_ladder_operators_commute_across_axes():
    u = random_tensor(4, 77)
    ab = hc.raise_mode(hc.lower_mode(u, 0), 1)
    ba = hc.lower_mode(hc.raise_mode(u, 1), 0)
    assert (ab - ba).norm_sq == pytest.approx(0.0, abs=1e-24)


def test_repeated_raising_from_ground_state():
    """A_+^beta psi_0 = sqrt(beta!) psi_beta."""
    g = hc.basis_tensor(hc.Truncation(0), (0, 0, 0))
    beta = (2, 1, 3)
    for axis, count in enumerate(beta):
        for _ in range(count):
            g = hc.raise_mode(g, axis)
    fact = math.factorial(2) * math.factorial(1) * math.factorial(3)
    assert g.coeff(beta) == pytest.approx(math.sqrt(fact))
    assert g.norm_sq == pytest.approx(fact)


# -- multiplication, differentiation, oscillator -------------------------------


def test_mult_v_recurrence_on_single_mode():
    g = hc.basis_tensor(hc.Truncation(3), (2, 0, 0))
    vg = hc.mult_v(g, 0)
    assert vg.coeff((3, 0, 0)) == pytest.approx(math.sqrt(3))
    assert vg.coeff((1, 0, 0)) == pytest.approx(math.sqrt(2))


def test_diff_matches_pointwise_derivative():
    g = random_tensor(5, 3)
    dg = hc.diff_v(g, 2)
    pts = np.array([[0.3, -1.1, 0.7], [1.5, 0.2, -0.4]])
    h = 1e-5
    for p in pts:
        plus = hc.eval_point(g, p + [0, 0, h])
        minus = hc.eval_point(g, p - [0, 0, h])
        assert hc.eval_point(dg, p) == pytest.approx((plus - minus) / (2 * h), rel=1e-7)


def test_mult_v_matches_pointwise_product():
    g = random_tensor(4, 9)
    vg = hc.mult_v(g, 1)
    p = np.array([0.4, -0.8, 1.3])
    assert hc.eval_point(vg, p) == pytest.approx(-0.8 * hc.eval_point(g, p), rel=1e-12)


def test_oscillator_diagonal_matches_ladder_composition():
    """H = sum_j A_{+,j} A_{-,j} + 3/2, diagonal with eigenvalue |alpha|+3/2."""
    g = random_tensor(5, 11)
    vialadder = 1.5 * g
    for j in range(3):
        vialadder = vialadder + hc.raise_mode(hc.lower_mode(g, j), j).pad_to(5)
    assert (hc.harmonic_apply(g, 2) - vialadder).norm_sq == pytest.approx(0.0, abs=1e-22)


def test_oscillator_half_power_squares_to_full():
    g = random_tensor(4, 13)
    twice = hc.harmonic_apply(hc.harmonic_apply(g, 1), 1)
    assert (twice - hc.harmonic_apply(g, 2)).norm_sq == pytest.approx(0.0, abs=1e-26)


# -- norms and projections -----------------------------------------------------


def test_parseval_against_quadrature():
    g = random_tensor(4, 21)
    x, w = hermegauss(12)
    polys = hc.hermite_poly_values_1d(x, 4)
    al = hc.ordering(4).alphas
    vals = np.einsum(
        "im,jm,km->ijk",
        polys[:, al[:, 0]] * g.values,
        polys[:, al[:, 1]],
        polys[:, al[:, 2]],
        optimize=True,
    )
    # reduced parts integrate against the normalized Gaussian weight
    wn = w / math.sqrt(2 * math.pi)
    integral = np.einsum("ijk,i,j,k->", vals**2, wn, wn, wn)
    assert integral == pytest.approx(g.norm_sq, rel=1e-12)


def test_level_projections_resolve_identity():
    g = random_tensor(6, 23)
    back = hc.zeros(g.trunc)
    for k in range(7):
        back = back + hc.project_level(g, k)
    assert (back - g).norm_sq == 0.0
    norms = hc.level_norms(g)
    assert np.sum(norms**2) == pytest.approx(g.norm_sq)


def test_retruncate_drops_high_levels():
    g = random_tensor(5, 31)
    cut = hc.retruncate(g, 3)
    assert cut.degree == 3
    assert cut.norm_sq == pytest.approx(np.sum(hc.level_norms(g)[:4] ** 2))
    padded = cut.pad_to(5)
    for k in range(4):
        assert np.allclose(
            hc.project_level(padded, k).values, hc.project_level(g, k).values
        )


# -- iterated raising gradient ---------------------------------------------- --


def brute_force_grad_norm_sq(g, m):
    """Direct sum over |alpha| = m of (m!/alpha!) ||A_+^alpha g||^2."""
    total = 0.0
    for a1 in range(m + 1):
        for a2 in range(m - a1 + 1):
            a3 = m - a1 - a2
            u = g
            for axis, count in enumerate((a1, a2, a3)):
                for _ in range(count):
                    u = hc.raise_mode(u, axis)
            mult = math.factorial(m) // (
                math.factorial(a1) * math.factorial(a2) * math.factorial(a3)
            )
            total += mult * u.norm_sq
    return total


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_grad_norm_matches_brute_force(m):
    g = random_tensor(3, 41 + m)
    assert hc.grad_hplus_norm_sq(g, m) == pytest.approx(
        brute_force_grad_norm_sq(g, m), rel=1e-13
    )


def test_grad_norm_ground_state_closed_form():
    """||grad_+^m psi_0||^2 = (m+1)(m+2) m!/2, exact in float64 up to m = 8."""
    psi0 = hc.basis_tensor(hc.Truncation(0), (0, 0, 0))
    for m in range(9):
        exact = (m + 1) * (m + 2) * math.factorial(m) // 2
        assert hc.grad_hplus_norm_sq(psi0, m) == float(exact)


def test_grad_norm_log_variant_consistent():
    g = random_tensor(2, 55)
    for m in (1, 5, 12):
        assert hc.grad_hplus_norm_log(g, m) == pytest.approx(
            math.log(hc.grad_hplus_norm_sq(g, m)), rel=1e-12
        )
    # large order goes through the log-domain recursion without overflow
    psi0 = hc.basis_tensor(hc.Truncation(0), (0, 0, 0))
    m = 40
    exact = math.log((m + 1) * (m + 2) / 2) + math.lgamma(m + 1)
    assert hc.grad_hplus_norm_log(psi0, m) == pytest.approx(exact, rel=1e-12)
    assert hc.grad_hplus_norm_sq(psi0, m) == pytest.approx(math.exp(exact), rel=1e-10)


def test_grad_norm_dominates_oscillator_power():
    """||H^{m/2} g||^2 <= ||grad_+^m g||^2, since (|beta|+3/2)^m <= w_m(beta)."""
    g = random_tensor(4, 61)
    for m in (1, 2, 3):
        assert hc.harmonic_apply(g, m).norm_sq <= hc.grad_hplus_norm_sq(g, m) * (
            1 + 1e-12
        )


# -- pointwise evaluation -------------------------------------------------------


def test_ground_state_value_at_origin():
    psi0 = hc.basis_tensor(hc.Truncation(0), (0, 0, 0))
    assert hc.eval_point(psi0, [0.0, 0.0, 0.0]) == pytest.approx(
        (2 * math.pi) ** (-0.75), rel=1e-15
    )
    assert hc.GAUSS_GROUND == pytest.approx((2 * math.pi) ** (-0.75), rel=1e-15)


def test_ground_state_is_sqrt_maxwellian():
    psi0 = hc.basis_tensor(hc.Truncation(0), (0, 0, 0))
    v = np.array([0.7, -0.3, 1.9])
    expect = (2 * math.pi) ** (-0.75) * math.exp(-np.dot(v, v) / 4)
    assert hc.eval_point(psi0, v) == pytest.approx(expect, rel=1e-14)


def test_eval_points_batches_match_single():
    g = random_tensor(5, 71)
    pts = np.random.default_rng(72).normal(size=(6, 3))
    batch = hc.eval_points(g, pts)
    for i, p in enumerate(pts):
        assert batch[i] == pytest.approx(hc.eval_point(g, p), rel=1e-14)


def test_hermite_polys_orthonormal_under_quadrature():
    x, w = hermegauss(24)
    vals = hc.hermite_poly_values_1d(x, 10)
    gram = (vals * w[:, None]).T @ vals / math.sqrt(2 * math.pi)
    assert np.allclose(gram, np.eye(11), atol=1e-12)


# -- tensor arithmetic and serialization ----------------------------------------


def test_values_are_read_only():
    g = random_tensor(2, 81)
    with pytest.raises(ValueError):
        g.values[0] = 5.0
    with pytest.raises(AttributeError):
        g.trunc = hc.Truncation(3)


def test_arithmetic_aligns_truncations():
    a = random_tensor(2, 91)
    b = random_tensor(4, 92)
    c = a + b
    assert c.degree == 4
    assert c.coeff((2, 0, 0)) == pytest.approx(a.coeff((2, 0, 0)) + b.coeff((2, 0, 0)))
    assert hc.dot(a, b) == pytest.approx(float(a.values @ b.values[: a.trunc.modes]))


def test_save_load_roundtrip(tmp_path):
    g = random_tensor(5, 101)
    path = tmp_path / "tensor.hgc"
    hc.save_tensor(path, g)
    back = hc.load_tensor(path)
    assert back.degree == 5
    assert np.array_equal(back.values, g.values)


def test_load_rejects_foreign_files(tmp_path):
    path = tmp_path / "junk.hgc"
    path.write_bytes(b"not a tensor at all")
    with pytest.raises(ValueError):
        hc.load_tensor(path)
