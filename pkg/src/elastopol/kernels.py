"""Point evaluation of the fundamental-solution kernels of the Lame system.

All kernels are 3x3 matrix valued and radially structured,

    G(x) = A(r) I + B(r) xh xh^T,     r = |x|,  xh = x / r,

which lets one code path serve the static (Kelvin) kernel, the
time-harmonic (Kupradze) kernel, its low-frequency series, and the
closed-form tractions.  The frequency may be complex (needed for the
rescaled interior wavenumber of a lossy inclusion); only its product with
the distance matters for branch selection between the closed form and the
cancellation-free series.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import (
    InvalidParameterError,
    PoleError,
    SingularPointError,
    UnsupportedOrderError,
)

# Below this value of |omega| * r the closed form of the Kupradze kernel
# loses digits to cancellation and the truncated series is used instead.
# Both branches agree to ~1e-10 near the threshold (covered by tests).
SERIES_SWITCH = 1e-3
_SERIES_TERMS = 12

_EYE = np.eye(3)


@dataclass(frozen=True)
class LameParams:
    """Background Lame pair with derived wave speeds and spectral constant."""

    lam: float
    mu: float

    def __post_init__(self):
        if not (self.mu > 0 and 3 * self.lam + 2 * self.mu > 0):
            raise InvalidParameterError(
                f"strong convexity requires mu > 0 and 3*lam + 2*mu > 0, "
                f"got lam={self.lam}, mu={self.mu}")

    @property
    def c_t(self) -> float:
        """Transverse wave speed sqrt(mu)."""
        return float(np.sqrt(self.mu))

    @property
    def c_l(self) -> float:
        """Longitudinal wave speed sqrt(lam + 2 mu)."""
        return float(np.sqrt(self.lam + 2 * self.mu))

    @property
    def gamma1(self) -> float:
        return 0.5 * (1.0 / self.mu + 1.0 / (2 * self.mu + self.lam))

    @property
    def gamma2(self) -> float:
        return 0.5 * (1.0 / self.mu - 1.0 / (2 * self.mu + self.lam))

    @property
    def k0(self) -> float:
        """Spectral constant mu / (2 (2 mu + lam)); lies in (0, 1/2)."""
        return self.mu / (2 * (2 * self.mu + self.lam))

    @property
    def gamma3(self) -> complex:
        """First-order series coefficient -i/(12 pi) (2/c_t^3 + 1/c_l^3)."""
        return -1j / (12 * np.pi) * (2 / self.c_t ** 3 + 1 / self.c_l ** 3)

    def k_t(self, omega) -> complex:
        """Transverse wavenumber omega / c_t."""
        return omega / self.c_t

    def k_l(self, omega) -> complex:
        """Longitudinal wavenumber omega / c_l."""
        return omega / self.c_l


@dataclass(frozen=True)
class Contrast:
    """Complex stiffness ratio of inclusion to background.

    The resolvent parameter ``kappa_c = (c+1)/(2(c-1))`` and the rescaling
    factor ``1/sqrt(c)`` for the interior frequency are exposed as
    properties; the square-root branch is fixed so that omega / sqrt(c) has
    positive real part and nonpositive imaginary part for omega > 0.
    """

    c: complex

    def __post_init__(self):
        c = complex(self.c)
        object.__setattr__(self, "c", c)
        if c.imag < -1e-15:
            raise InvalidParameterError(f"contrast must satisfy Im c >= 0, got {c}")

    @property
    def kappa_c(self) -> complex:
        if self.c == 1:
            raise PoleError("kappa_c has a pole at c = 1")
        return (self.c + 1) / (2 * (self.c - 1))

    @property
    def omega1_factor(self) -> complex:
        """Branch of 1/sqrt(c) with Re > 0 (limit from Im c > 0), Im <= 0."""
        if self.c == 0:
            raise InvalidParameterError("contrast c = 0 has no interior frequency")
        s = 1.0 / np.sqrt(complex(self.c))
        if s.real < 0 or (s.real == 0 and s.imag > 0):
            s = -s
        return complex(s)


def kappa_of_c(c: complex) -> complex:
    """Resolvent parameter kappa = (c+1) / (2(c-1))."""
    if c == 1:
        raise PoleError("kappa_of_c has a pole at c = 1")
    return (c + 1) / (2 * (c - 1))


def c_of_kappa(kappa: complex) -> complex:
    """Inverse map c = (2 kappa + 1) / (2 kappa - 1)."""
    if kappa == 0.5:
        raise PoleError("c_of_kappa has a pole at kappa = 1/2")
    return (2 * kappa + 1) / (2 * kappa - 1)


# ---------------------------------------------------------------------------
# Radial coefficients
# ---------------------------------------------------------------------------

def _series_coefficients(p: LameParams, n_terms: int):
    """Taylor coefficients (a_n, b_n) of the kernel in powers of (omega r).

    G(x) = sum_n omega^n [ a_n r^(n-1) I + b_n r^(n-1) xh xh^T ].
    """
    n = np.arange(n_terms)
    i_n = 1j ** n
    fact = np.array([factorial(k) for k in n], dtype=float)
    ct_pow = p.c_t ** (n + 2)
    cl_pow = p.c_l ** (n + 2)
    a = -(i_n / ((n + 2) * fact)) * ((n + 1) / ct_pow + 1.0 / cl_pow) / (4 * np.pi)
    b = (i_n * (n - 1) / ((n + 2) * fact)) * (1.0 / ct_pow - 1.0 / cl_pow) / (4 * np.pi)
    return a, b


def _radial_series(r, omega, p: LameParams, n_terms=_SERIES_TERMS, skip_static=False):
    a, b = _series_coefficients(p, n_terms)
    n0 = 1 if skip_static else 0
    r = np.asarray(r, dtype=float)
    A = np.zeros(r.shape, dtype=complex)
    B = np.zeros(r.shape, dtype=complex)
    dA = np.zeros(r.shape, dtype=complex)
    dB = np.zeros(r.shape, dtype=complex)
    for n in range(n0, n_terms):
        wn = omega ** n
        rn1 = r ** (n - 1)
        A += a[n] * wn * rn1
        B += b[n] * wn * rn1
        rn2 = r ** (n - 2)
        dA += a[n] * (n - 1) * wn * rn2
        dB += b[n] * (n - 1) * wn * rn2
    return A, B, dA, dB


def _radial_closed(r, omega, p: LameParams):
    """Closed-form radial data of the Kupradze kernel (omega != 0)."""
    kt = p.k_t(omega)
    kl = p.k_l(omega)

    def g(k, order):
        e = np.exp(1j * k * r)
        if order == 0:
            return e / r
        if order == 1:
            return e * (1j * k / r - 1.0 / r ** 2)
        if order == 2:
            return e * (-k ** 2 / r - 2j * k / r ** 2 + 2.0 / r ** 3)
        return e * (-1j * k ** 3 / r + 3 * k ** 2 / r ** 2 + 6j * k / r ** 3 - 6.0 / r ** 4)

    # The Hessian term carries -1/(4 pi omega^2): this is the sign for which
    # the kernel solves the PDE and limits to the Kelvin matrix (it also
    # reproduces the low-frequency series coefficients term by term).
    c0 = -1.0 / (4 * np.pi * omega ** 2)
    f1 = g(kt, 1) - g(kl, 1)
    f2 = g(kt, 2) - g(kl, 2)
    f3 = g(kt, 3) - g(kl, 3)
    A = -g(kt, 0) / (4 * np.pi * p.mu) + c0 * f1 / r
    B = c0 * (f2 - f1 / r)
    dA = -g(kt, 1) / (4 * np.pi * p.mu) + c0 * (f2 / r - f1 / r ** 2)
    dB = c0 * (f3 - f2 / r + f1 / r ** 2)
    return A, B, dA, dB


def _radial_static(r, p: LameParams):
    """Kelvin radial data: A = -gamma1/(4 pi r), B = -gamma2/(4 pi r)."""
    A = -p.gamma1 / (4 * np.pi * r)
    B = -p.gamma2 / (4 * np.pi * r)
    dA = p.gamma1 / (4 * np.pi * r ** 2)
    dB = p.gamma2 / (4 * np.pi * r ** 2)
    return A, B, dA, dB


def radial_coefficients(r, omega, p: LameParams, subtract_static: bool = False):
    """Radial data (A, B, A', B') of the kernel at distances ``r``.

    ``subtract_static=True`` returns the data of ``G^omega - G^0``, using a
    static-free series near ``|omega| r = 0`` so the difference never loses
    digits to cancellation.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise SingularPointError("kernel evaluated at zero distance")
    if omega == 0:
        if subtract_static:
            z = np.zeros(r.shape, dtype=complex)
            return z, z.copy(), z.copy(), z.copy()
        return _radial_static(r, p)

    out = [np.empty(r.shape, dtype=complex) for _ in range(4)]
    small = (np.abs(omega) * r) < SERIES_SWITCH
    large = ~small
    if np.any(large):
        rl = r[large]
        vals = _radial_closed(rl, omega, p)
        if subtract_static:
            stat = _radial_static(rl, p)
            vals = tuple(v - s for v, s in zip(vals, stat))
        for o, v in zip(out, vals):
            o[large] = v
    if np.any(small):
        vals = _radial_series(r[small], omega, p, skip_static=subtract_static)
        for o, v in zip(out, vals):
            o[small] = v
    return tuple(out)


# ---------------------------------------------------------------------------
# Matrix kernels (vectorised over leading axes)
# ---------------------------------------------------------------------------

def _assemble_matrix(z, A, B):
    r = np.linalg.norm(z, axis=-1)
    zh = z / r[..., None]
    return (
        A[..., None, None] * _EYE
        + B[..., None, None] * zh[..., :, None] * zh[..., None, :]
    )


def gamma_matrix(z, omega, p: LameParams, subtract_static: bool = False):
    """Kernel matrices at displacement vectors ``z`` of shape (..., 3)."""
    z = np.asarray(z, dtype=float)
    r = np.linalg.norm(z, axis=-1)
    A, B, _, _ = radial_coefficients(r, omega, p, subtract_static)
    return _assemble_matrix(z, A, B)


def traction_matrix(z, nu, omega, p: LameParams, subtract_static: bool = False):
    """Conormal derivative of the kernel columns, in closed form.

    ``z = x - y`` and ``nu`` is the unit normal at the derivative point x;
    both broadcast over leading axes.  Entry (i, j) is component i of the
    traction of the j-th kernel column.
    """
    z = np.asarray(z, dtype=float)
    nu = np.broadcast_to(np.asarray(nu, dtype=float), z.shape)
    r = np.linalg.norm(z, axis=-1)
    A, B, dA, dB = radial_coefficients(r, omega, p, subtract_static)
    return _traction_from_radial(z, nu, r, B, dA, dB, p)


def _traction_from_radial(z, nu, r, B, dA, dB, p: LameParams):
    zh = z / r[..., None]
    br = B / r
    s0 = dA + dB + 2 * br
    zz = zh[..., :, None] * zh[..., None, :]
    nz = nu[..., :, None] * zh[..., None, :]
    zn = zh[..., :, None] * nu[..., None, :]
    ndz = np.einsum("...i,...i->...", nu, zh)
    t = p.lam * s0[..., None, None] * nz
    t = t + p.mu * ndz[..., None, None] * (
        dA[..., None, None] * _EYE
        + 2 * dB[..., None, None] * zz
        + br[..., None, None] * (_EYE - 4 * zz)
    )
    t = t + p.mu * (dA[..., None, None] * zn + br[..., None, None] * (2 * nz + zn))
    return t


def kelvin_matrix(x, p: LameParams) -> np.ndarray:
    """Static (Kelvin) fundamental matrix at a single point x != 0."""
    x = np.asarray(x, dtype=float)
    if np.linalg.norm(x) == 0:
        raise SingularPointError("Kelvin matrix is singular at x = 0")
    return gamma_matrix(x, 0.0, p).real


def kupradze_matrix(x, omega, p: LameParams) -> np.ndarray:
    """Time-harmonic fundamental matrix at a single point x != 0.

    ``omega`` may be complex but not zero; for the static kernel call
    :func:`kelvin_matrix`.
    """
    x = np.asarray(x, dtype=float)
    if np.linalg.norm(x) == 0:
        raise SingularPointError("kernel is singular at x = 0")
    if omega == 0 or (np.isrealobj(omega) and not np.iscomplexobj(omega) and omega < 0):
        raise InvalidParameterError(
            "omega must be nonzero (and positive if real); use kelvin_matrix for omega = 0")
    return gamma_matrix(x, complex(omega), p)


def kupradze_series(x, delta, p: LameParams, n_truncate: int) -> np.ndarray:
    """Partial sum (orders 0..n_truncate) of the low-frequency kernel series."""
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r == 0:
        raise SingularPointError("kernel is singular at x = 0")
    if n_truncate < 0:
        raise InvalidParameterError("truncation order must be >= 0")
    a, b = _series_coefficients(p, n_truncate + 1)
    n = np.arange(n_truncate + 1)
    A = np.sum(a * delta ** n * r ** (n - 1.0))
    B = np.sum(b * delta ** n * r ** (n - 1.0))
    xh = x / r
    return A * _EYE + B * np.outer(xh, xh)


def lambda_matrix(x, p: LameParams) -> np.ndarray:
    """Second-order series kernel; continuous at 0 with value 0."""
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r == 0:
        return np.zeros((3, 3))
    ai = (3 / p.c_t ** 4 + 1 / p.c_l ** 4) / (32 * np.pi)
    bi = -(1 / p.c_t ** 4 - 1 / p.c_l ** 4) / (32 * np.pi)
    return ai * r * _EYE + bi * np.outer(x, x) / r


def lambda_gamma_pair(p: LameParams):
    """Radial coefficients (a, b) with Lambda(x) = a r I + b r xh xh^T."""
    a = (3 / p.c_t ** 4 + 1 / p.c_l ** 4) / (32 * np.pi)
    b = -(1 / p.c_t ** 4 - 1 / p.c_l ** 4) / (32 * np.pi)
    return a, b


def lambda_traction_matrix(z, nu, p: LameParams):
    """Traction (in x) of the Lambda kernel columns; bounded as |z| -> 0."""
    z = np.asarray(z, dtype=float)
    nu = np.broadcast_to(np.asarray(nu, dtype=float), z.shape)
    a, b = lambda_gamma_pair(p)
    r = np.linalg.norm(z, axis=-1)
    A = a * r
    B = b * r
    dA = np.full(r.shape, a, dtype=float)
    dB = np.full(r.shape, b, dtype=float)
    return _traction_from_radial(z, nu, r, B, dA, dB, p)


def traction_kernel(x, y, nu_x, omega, p: LameParams) -> np.ndarray:
    """Traction kernel: conormal derivative at x of the kernel columns.

    This is the integrand of the Neumann-Poincare operator; swapping the
    roles of (x, nu_x) and (y, nu_y) and transposing gives the double-layer
    kernel.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = x - y
    if np.linalg.norm(z) == 0:
        raise SingularPointError("traction kernel is singular at x = y")
    return traction_matrix(z, np.asarray(nu_x, dtype=float), complex(omega), p)


# ---------------------------------------------------------------------------
# Finite-difference derivatives of the kernel
# ---------------------------------------------------------------------------

def _fundamental(x, omega, p: LameParams):
    if omega == 0:
        return gamma_matrix(x, 0.0, p)
    return gamma_matrix(x, complex(omega), p)


def gamma_derivative(x, omega, p: LameParams, alpha) -> np.ndarray:
    """Partial derivative of the kernel, multi-index ``alpha`` with |alpha| <= 2.

    Centered finite differences with one Richardson level; the step is
    1e-5 * max(1, |x|), balancing truncation against roundoff at the
    accuracy the far-field expansion needs.
    """
    x = np.asarray(x, dtype=float)
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != 3 or any(a < 0 for a in alpha):
        raise UnsupportedOrderError(f"invalid multi-index {alpha}")
    order = sum(alpha)
    if order > 2:
        raise UnsupportedOrderError(f"derivative order {order} > 2 unsupported")
    if np.linalg.norm(x) == 0:
        raise SingularPointError("kernel derivative is singular at x = 0")
    if order == 0:
        return _fundamental(x, omega, p)

    h = 1e-5 * max(1.0, float(np.linalg.norm(x)))

    def stencil(step):
        if order == 1:
            i = alpha.index(1)
            e = _EYE[i]
            return (_fundamental(x + step * e, omega, p)
                    - _fundamental(x - step * e, omega, p)) / (2 * step)
        if 2 in alpha:
            i = alpha.index(2)
            e = _EYE[i]
            return (_fundamental(x + step * e, omega, p)
                    - 2 * _fundamental(x, omega, p)
                    + _fundamental(x - step * e, omega, p)) / step ** 2
        i, j = [k for k in range(3) if alpha[k] == 1]
        ei, ej = _EYE[i], _EYE[j]
        return (
            _fundamental(x + step * ei + step * ej, omega, p)
            - _fundamental(x + step * ei - step * ej, omega, p)
            - _fundamental(x - step * ei + step * ej, omega, p)
            + _fundamental(x - step * ei - step * ej, omega, p)
        ) / (4 * step ** 2)

    coarse = stencil(h)
    fine = stencil(h / 2)
    return (4 * fine - coarse) / 3
