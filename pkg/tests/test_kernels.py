import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elastopol.errors import (
    InvalidParameterError,
    PoleError,
    SingularPointError,
    UnsupportedOrderError,
)
from elastopol.kernels import (
    Contrast,
    LameParams,
    c_of_kappa,
    gamma_derivative,
    kappa_of_c,
    kelvin_matrix,
    kupradze_matrix,
    kupradze_series,
    lambda_matrix,
    traction_kernel,
)

P11 = LameParams(1.0, 1.0)

vec3 = st.tuples(
    st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2)
).map(np.array).filter(lambda v: np.linalg.norm(v) > 0.1)


# ---------------------------------------------------------------------------
# material parameters
# ---------------------------------------------------------------------------

def test_lame_derived_values():
    p = P11
    assert p.c_t == pytest.approx(1.0)
    assert p.c_l == pytest.approx(np.sqrt(3.0))
    assert p.gamma1 == pytest.approx(2.0 / 3.0)
    assert p.gamma2 == pytest.approx(1.0 / 3.0)
    assert p.k0 == pytest.approx(1.0 / 6.0)


def test_lame_rejects_nonconvex():
    with pytest.raises(InvalidParameterError):
        LameParams(1.0, 0.0)
    with pytest.raises(InvalidParameterError):
        LameParams(-1.0, 1.0)  # 3(-1) + 2 < 0


@settings(max_examples=50, deadline=None)
@given(lam=st.floats(-0.6, 10.0), mu=st.floats(0.01, 10.0))
def test_lame_invariants(lam, mu):
    if not (mu > 0 and 3 * lam + 2 * mu > 0):
        return
    p = LameParams(lam, mu)
    assert 0 < p.k0 < 0.5
    assert p.gamma1 > p.gamma2 > 0


def test_contrast_branch():
    # principal branch with Re > 0, Im <= 0 for the interior frequency factor
    for c in (3.0, -2.0 + 0.1j, -5.0 + 0j, 0.5 + 2j):
        s = Contrast(c).omega1_factor
        assert s.real >= 0
        assert s.imag <= 1e-15
        assert s.real > 0 or s.imag < 0
    # negative real axis: the limit from Im c > 0 is purely decaying
    s = Contrast(-4.0).omega1_factor
    assert s.real == pytest.approx(0.0, abs=1e-15)
    assert s.imag == pytest.approx(-0.5)


def test_contrast_rejects_lower_half_plane():
    with pytest.raises(InvalidParameterError):
        Contrast(1.0 - 1.0j)


def test_kappa_values():
    assert kappa_of_c(-1.0) == pytest.approx(0.0)
    assert c_of_kappa(0.0) == pytest.approx(-1.0)
    assert kappa_of_c(3.0) == pytest.approx(1.0)
    assert kappa_of_c(2.0) == pytest.approx(1.5)
    with pytest.raises(PoleError):
        kappa_of_c(1.0)
    with pytest.raises(PoleError):
        c_of_kappa(0.5)
    with pytest.raises(PoleError):
        Contrast(1.0).kappa_c


@settings(max_examples=50, deadline=None)
@given(re=st.floats(-5, 5), im=st.floats(0, 5))
def test_kappa_roundtrip(re, im):
    c = complex(re, im)
    if abs(c - 1) < 1e-6:
        return
    k = kappa_of_c(c)
    assert c_of_kappa(k) == pytest.approx(c, rel=1e-10)


def test_positive_contrast_kappa_right_of_half():
    # Re c > 0 pushes the resolvent parameter to the right of 1/2
    for c in (0.5, 2.0, 3.0, 10.0):
        assert kappa_of_c(c).real > 0.5 or abs(kappa_of_c(c).real) > 0.5


# ---------------------------------------------------------------------------
# Kelvin matrix
# ---------------------------------------------------------------------------

def test_kelvin_closed_form_values():
    got = kelvin_matrix(np.array([1.0, 0.0, 0.0]), P11)
    expected = np.diag([-1 / (4 * np.pi), -(2 / 3) / (4 * np.pi), -(2 / 3) / (4 * np.pi)])
    np.testing.assert_allclose(got, expected, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(x=vec3)
def test_kelvin_homogeneity_and_evenness(x):
    g = kelvin_matrix(x, P11)
    np.testing.assert_allclose(kelvin_matrix(2 * x, P11), g / 2, atol=1e-14)
    np.testing.assert_allclose(kelvin_matrix(-x, P11), g, atol=1e-16)
    np.testing.assert_allclose(g, g.T, atol=1e-16)


def test_kelvin_singular_point():
    with pytest.raises(SingularPointError):
        kelvin_matrix(np.zeros(3), P11)


# ---------------------------------------------------------------------------
# Kupradze matrix and its series
# ---------------------------------------------------------------------------

def test_kupradze_static_limit():
    x = np.array([0.7, 0.2, -0.3])
    diff = np.abs(kupradze_matrix(x, 1e-6, P11) - kelvin_matrix(x, P11))
    assert diff.max() < 1e-5


def test_kupradze_rejects_zero_and_negative_frequency():
    x = np.array([1.0, 0, 0])
    with pytest.raises(InvalidParameterError):
        kupradze_matrix(x, 0.0, P11)
    with pytest.raises(InvalidParameterError):
        kupradze_matrix(x, -1.0, P11)
    with pytest.raises(SingularPointError):
        kupradze_matrix(np.zeros(3), 1.0, P11)


def test_kupradze_matches_series_small_argument():
    # independent oracle: the truncated low-frequency series at omega|x| = 0.05
    x = np.array([0.7, 0.2, -0.3])
    omega = 0.05 / np.linalg.norm(x)
    diff = np.abs(kupradze_matrix(x, omega, P11) - kupradze_series(x, omega, P11, 8))
    assert diff.max() < 1e-10


@settings(max_examples=20, deadline=None)
@given(x=vec3, omega=st.floats(0.05, 3.0))
def test_kupradze_symmetry(x, omega):
    g = kupradze_matrix(x, omega, P11)
    np.testing.assert_allclose(g, g.T, atol=0)


def test_series_truncation_zero_is_kelvin():
    x = np.array([0.3, -1.1, 0.4])
    np.testing.assert_allclose(
        kupradze_series(x, 0.7, P11, 0), kelvin_matrix(x, P11), atol=1e-15)


def test_series_first_order_term_is_isotropic():
    # the n=1 rank-one part vanishes (factor n-1), leaving gamma3 * delta * I
    x = np.array([0.3, -1.1, 0.4])
    delta = 0.2
    step = kupradze_series(x, delta, P11, 1) - kupradze_series(x, delta, P11, 0)
    np.testing.assert_allclose(step, delta * P11.gamma3 * np.eye(3), atol=1e-15)
    off = step - np.eye(3) * step[0, 0]
    assert np.abs(off).max() < 1e-16


def test_series_truncation_slope():
    # truncation error of the N=2 partial sum scales like delta^3
    x = np.array([1.0, 0.3, -0.2])
    deltas = np.array([0.1, 0.05, 0.025])
    errs = [
        np.abs(kupradze_series(x, d, P11, 2) - kupradze_matrix(x, d, P11)).max()
        for d in deltas
    ]
    slope = np.polyfit(np.log(deltas), np.log(errs), 1)[0]
    assert slope == pytest.approx(3.0, abs=0.3)


def test_series_error_monotone_in_truncation():
    x = np.array([0.5, 0.1, -0.6])
    omega = 0.8
    errs = [
        np.abs(kupradze_series(x, omega, P11, n) - kupradze_matrix(x, omega, P11)).max()
        for n in (0, 2, 4, 6)
    ]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_branch_consistency_at_switch():
    # closed form and series branches agree where the evaluator switches
    x = np.array([0.7, 0.2, -0.3])
    r = np.linalg.norm(x)
    for target in (9e-4, 1.1e-3):
        omega = target / r
        diff = np.abs(kupradze_matrix(x, omega, P11) - kupradze_series(x, omega, P11, 11))
        assert diff.max() < 1e-10


# ---------------------------------------------------------------------------
# Lambda kernel
# ---------------------------------------------------------------------------

def test_lambda_at_origin():
    np.testing.assert_array_equal(lambda_matrix(np.zeros(3), P11), np.zeros((3, 3)))


def test_lambda_is_second_series_coefficient():
    x = np.array([0.4, -0.2, 0.9])
    delta = 0.3
    step = kupradze_series(x, delta, P11, 2) - kupradze_series(x, delta, P11, 1)
    np.testing.assert_allclose(step / delta ** 2, lambda_matrix(x, P11), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(x=vec3)
def test_lambda_homogeneity(x):
    np.testing.assert_allclose(
        lambda_matrix(2 * x, P11), 2 * lambda_matrix(x, P11), atol=1e-13)


# ---------------------------------------------------------------------------
# traction kernel
# ---------------------------------------------------------------------------

def _fd_traction(x, y, nu, omega, p, h=1e-6):
    """Columnwise traction by centered finite differences (test oracle)."""
    out = np.zeros((3, 3), dtype=complex)
    eye = np.eye(3)
    fun = (lambda z: kelvin_matrix(z, p)) if omega == 0 else (
        lambda z: kupradze_matrix(z, omega, p))
    for j in range(3):
        grad = np.zeros((3, 3), dtype=complex)
        for k in range(3):
            grad[:, k] = (fun(x + h * eye[k] - y)[:, j]
                          - fun(x - h * eye[k] - y)[:, j]) / (2 * h)
        out[:, j] = p.lam * np.trace(grad) * nu + p.mu * (grad + grad.T) @ nu
    return out


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_traction_against_finite_differences_static(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=3)
    y = x + rng.normal(size=3)
    nu = rng.normal(size=3)
    nu /= np.linalg.norm(nu)
    got = traction_kernel(x, y, nu, 0.0, P11)
    ref = _fd_traction(x, y, nu, 0.0, P11)
    assert np.abs(got - ref).max() / np.abs(ref).max() < 1e-8


def test_traction_against_finite_differences_dynamic():
    rng = np.random.default_rng(7)
    x = rng.normal(size=3)
    y = x + rng.normal(size=3)
    nu = rng.normal(size=3)
    nu /= np.linalg.norm(nu)
    got = traction_kernel(x, y, nu, 1.3, P11)
    ref = _fd_traction(x, y, nu, 1.3, P11)
    assert np.abs(got - ref).max() / np.abs(ref).max() < 1e-8


def test_traction_static_limit():
    x = np.array([0.2, 0.5, -0.1])
    y = np.array([-0.6, 0.1, 0.4])
    nu = np.array([0.0, 0.0, 1.0])
    d = np.abs(traction_kernel(x, y, nu, 1e-6, P11) - traction_kernel(x, y, nu, 0.0, P11))
    assert d.max() < 1e-5


def test_traction_homogeneity_static():
    x = np.array([0.2, 0.5, -0.1])
    y = np.array([-0.6, 0.1, 0.4])
    nu = np.array([0.0, 1.0, 0.0])
    t1 = traction_kernel(x, y, nu, 0.0, P11)
    t2 = traction_kernel(2 * x, 2 * y, nu, 0.0, P11)
    np.testing.assert_allclose(t2, t1 / 4, atol=1e-14)


def test_traction_singular_point():
    x = np.array([1.0, 0, 0])
    with pytest.raises(SingularPointError):
        traction_kernel(x, x, np.array([1.0, 0, 0]), 0.0, P11)


# ---------------------------------------------------------------------------
# kernel derivatives
# ---------------------------------------------------------------------------

def test_gamma_derivative_order_zero():
    x = np.array([0.9, -0.2, 0.5])
    np.testing.assert_allclose(
        gamma_derivative(x, 1.0, P11, (0, 0, 0)), kupradze_matrix(x, 1.0, P11), atol=0)


def test_gamma_derivative_rejects_high_order():
    with pytest.raises(UnsupportedOrderError):
        gamma_derivative(np.array([1.0, 0, 0]), 1.0, P11, (2, 1, 0))


def test_gamma_derivative_parity():
    x = np.array([0.8, 0.1, -0.4])
    d_plus = gamma_derivative(x, 0.0, P11, (1, 0, 0))
    d_minus = gamma_derivative(-x, 0.0, P11, (1, 0, 0))
    np.testing.assert_allclose(d_minus, -d_plus, rtol=1e-8)


def test_kernel_pde_residual():
    # (mu Lap + (lam+mu) grad div + omega^2) applied to each kernel column
    # must vanish away from the origin; residual measured against the size
    # of the cancelling terms.
    x = np.array([1.0, 0.3, 0.2])
    omega = 1.0
    second = {}
    for i in range(3):
        for k in range(i, 3):
            a = [0, 0, 0]
            a[i] += 1
            a[k] += 1
            second[(i, k)] = gamma_derivative(x, omega, P11, a)
            second[(k, i)] = second[(i, k)]
    g = kupradze_matrix(x, omega, P11)
    lap = sum(second[(i, i)] for i in range(3))
    graddiv = np.zeros((3, 3), dtype=complex)
    for i in range(3):
        for j in range(3):
            graddiv[i, j] = sum(second[(i, k)][k, j] for k in range(3))
    t1 = P11.mu * lap
    t2 = (P11.lam + P11.mu) * graddiv
    t3 = omega ** 2 * g
    scale = np.abs(t1).max() + np.abs(t2).max() + np.abs(t3).max()
    assert np.abs(t1 + t2 + t3).max() / scale < 1e-4
