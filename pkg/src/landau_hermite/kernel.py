"""Collision kernel layer.

The kernel matrix is phi^{ij}(v) = |v|^gamma (|v|^2 d_ij - v_i v_j) and the
layer provides its Gaussian convolutions against the unit Maxwellian
mu = (2 pi)^{-3/2} exp(-|v|^2/2),

    sigma^{ij} = phi^{ij} * mu,      sigma^i = sum_j phi^{ij} * (v_j mu),

together with quadrature rules, basis-value tables at the nodes, and a
Hermite expansion of sigma used by the operator assembly.

Rotational symmetry reduces sigma to two radial profiles,

    sigma^{ij}(v) = s_perp(rho) d_ij + d(rho) v_i v_j,    rho = |v|,
    s_para(rho) = s_perp + d rho^2,   sigma^i(v) = s_para(rho) v_i,

(the last equality uses the null identity sum_j phi^{ij}(u) u_j = 0).  The
angular integral is done in closed form, leaving one radial integral per
profile:

    s_perp = c int_0^inf r^{gamma+4} (J0 + J2) dr,
    s_para = c int_0^inf r^{gamma+4} 2 (J0 - J2) dr,
    d      = c int_0^inf r^{gamma+4} (J0 - 3 J2) / rho^2 dr,

with c = 1/(2 sqrt(2 pi)), a = r rho, Em = exp(-(r-rho)^2/2),
Ep = exp(-(r+rho)^2/2) and

    J0 = (Em - Ep)/a,
    J2 = ((a^2+2)(Em - Ep) - 2a(Em + Ep))/a^3,
    J0 - J2 = (2a(Em + Ep) - 2(Em - Ep))/a^3.

Each kernel switches to a Taylor series in a^2 below a small-a threshold
where the closed forms cancel catastrophically.  At gamma = 0 everything
is polynomial: s_perp = rho^2 + 2, s_para = 2, d = -1, used as closed
forms and as oracles for the integration machinery.

For gamma > 0 the profiles are tabulated once as Chebyshev series in
z = rho^2 (sigma is entire and even in rho, so a polynomial in z), cached
to disk.  The Hermite expansion of sigma^{ij} feeds the Galerkin assembly:
a bilinear form over modes |alpha| <= N only sees the projection of sigma
onto Hermite degrees <= 2N, so assembling with the degree-(>=2N) expansion
reproduces the exact Galerkin matrix of the true kernel (the expansion is
spectrally exact where the pairing can see).
"""

from __future__ import annotations

import functools
import hashlib
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.polynomial.chebyshev import Chebyshev
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss

from .hermite_core import CoeffTensor, hermite_poly_values_1d, ordering

__all__ = [
    "Potential",
    "phi_matrix",
    "radial_profiles",
    "profile_quad_reference",
    "SigmaProfile",
    "sigma_profile",
    "sigma_matrix",
    "sigma_vector",
    "TensorGaussHermite",
    "RadialSphericalRule",
    "tensor_rule",
    "default_rule",
    "sigma_ij",
    "sigma_i",
    "basis_node_values",
    "eval_reduced_on_rule",
    "eval_reduced_batch_on_rule",
    "SigmaExpansion",
    "sigma_expansion",
    "expansion_degree",
    "conv_matrix",
    "conv_field_coeffs",
    "conv_sqrtmu",
    "cache_dir",
]

_PREF = 1.0 / (2.0 * math.sqrt(2.0 * math.pi))
_SMALL_A = 0.35

# Taylor coefficients in a^2 of the angular moments with the common factor
# exp(-(r^2+rho^2)/2) removed: M0 = 2 sinh(a)/a and
# M2 = (2(a^2+2) sinh a - 4a cosh a)/a^3, so that J0 = com*M0, J2 = com*M2.
_M0_SER = np.array([2, 1 / 3, 1 / 60, 1 / 2520, 1 / 181440, 1 / 19958400])
_M2_SER = np.array([2 / 3, 1 / 5, 1 / 84, 1 / 3240, 1 / 221760, 1 / 23587200])
_SER_SUM = _M0_SER + _M2_SER
_SER_PARA = 2.0 * (_M0_SER - _M2_SER)  # = 8 (a cosh a - sinh a)/a^3
_SER_DIF = (_M0_SER - 3.0 * _M2_SER)[1:]  # (M0 - 3 M2)/a^2; constant term is 0


@dataclass(frozen=True)
class Potential:
    """Kernel exponent; hard potentials only."""

    gamma: float

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("hard potential scope: gamma must be >= 0")


def phi_matrix(v, pot: Potential) -> np.ndarray:
    """Kernel matrix |v|^gamma (|v|^2 I - v x v) at one point or a batch.

    Positive semi-definite with null vector v; zero matrix at v = 0.
    """
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    pts = np.atleast_2d(v)
    r2 = np.sum(pts * pts, axis=1)
    out = r2[:, None, None] * np.eye(3) - pts[:, :, None] * pts[:, None, :]
    if pot.gamma != 0:
        with np.errstate(divide="ignore"):
            fac = np.where(r2 > 0, r2 ** (0.5 * pot.gamma), 0.0)
        out *= fac[:, None, None]
    return out[0] if single else out


def _poly_eval(series: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.full_like(x, series[-1])
    for c in series[-2::-1]:
        out = out * x + c
    return out


def _radial_kernels(r: np.ndarray, rho: np.ndarray):
    """The three radial kernels (perp, para, dif) at broadcastable r, rho."""
    a = r * rho
    small = a < _SMALL_A
    a_safe = np.where(small, 1.0, a)
    em = np.exp(-0.5 * (r - rho) ** 2)
    ep = np.exp(-0.5 * (r + rho) ** 2)
    dm, dp = em - ep, em + ep
    m0 = dm / a_safe
    m2 = ((a * a + 2.0) * dm - 2.0 * a * dp) / a_safe**3
    para_dir = (4.0 * a * dp - 4.0 * dm) / a_safe**3  # 2 (J0 - J2)
    com = np.exp(-0.5 * (r * r + rho * rho))
    a2 = a * a
    rho_safe = np.where(rho == 0.0, 1.0, rho)
    perp = np.where(small, com * _poly_eval(_SER_SUM, a2), m0 + m2)
    para = np.where(small, com * _poly_eval(_SER_PARA, a2), para_dir)
    dif = np.where(
        small,
        com * r * r * _poly_eval(_SER_DIF, a2),
        (m0 - 3.0 * m2) / rho_safe**2,
    )
    return perp, para, dif


def radial_profiles(rho, gamma: float, nr: int = 200, span: float = 42.0):
    """Profiles (s_perp, s_para, d) by Gauss-Legendre radial integration.

    The integrand is concentrated in |r - rho| <~ 8; `span` truncates far
    beyond that.  Evaluation is chunked to bound the (points x nr) scratch.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=np.float64))
    xg, wg = leggauss(nr)
    out = np.empty((3, rho.size))
    for start in range(0, rho.size, 4096):
        blk = rho[start : start + 4096]
        lo = np.maximum(blk - span, 0.0)
        hi = blk + span
        half = 0.5 * (hi - lo)
        r = half[:, None] * (xg[None, :] + 1.0) + lo[:, None]
        w = half[:, None] * wg[None, :]
        perp_k, para_k, dif_k = _radial_kernels(r, blk[:, None])
        face = _PREF * w * r ** (gamma + 4.0)
        sl = slice(start, start + blk.size)
        out[0, sl] = np.sum(face * perp_k, axis=1)
        out[1, sl] = np.sum(face * para_k, axis=1)
        out[2, sl] = np.sum(face * dif_k, axis=1)
    return out[0], out[1], out[2]


def profile_quad_reference(rho: float, gamma: float):
    """Adaptive-quadrature profiles, the slow cross-check for the rule above."""
    from scipy.integrate import quad

    lo, hi = max(rho - 42.0, 0.0), rho + 42.0
    rr = np.float64(rho)

    def component(idx):
        f = lambda r: _PREF * r ** (gamma + 4.0) * _radial_kernels(
            np.float64(r), rr
        )[idx]
        val, _ = quad(f, lo, hi, epsabs=1e-13, epsrel=1e-13, limit=200)
        return val

    return component(0), component(1), component(2)


# -- closed forms at gamma = 0 --------------------------------------------------


def _gamma0_profiles(rho: np.ndarray):
    perp = rho * rho + 2.0
    para = np.full_like(perp, 2.0)
    d = np.full_like(perp, -1.0)
    return perp, para, d


# -- tabulated profiles ----------------------------------------------------------


class SigmaProfile:
    """Chebyshev tables of the diffusion profiles in z = rho^2.

    sigma is even and entire in rho, hence a (numerically truncated)
    polynomial in z; the three tables share the domain [0, zmax].  Points
    beyond the table range fall back to direct radial integration.
    """

    def __init__(self, gamma, zmax, cheb_perp, cheb_para, cheb_d):
        self.gamma = gamma
        self.zmax = zmax
        self._perp = cheb_perp
        self._para = cheb_para
        self._d = cheb_d

    @classmethod
    def build(cls, gamma: float, zmax: float = 784.0, degree: int = 260):
        def make(idx):
            def f(z):
                rho = np.sqrt(np.maximum(z, 0.0))
                return radial_profiles(rho, gamma)[idx]

            return Chebyshev.interpolate(f, degree, domain=[0.0, zmax])

        return cls(gamma, zmax, make(0), make(1), make(2))

    def _eval(self, rho, which: int):
        arr = np.atleast_1d(np.asarray(rho, dtype=np.float64))
        z = arr * arr
        table = (self._perp, self._para, self._d)[which]
        out = np.asarray(table(np.minimum(z, self.zmax)))
        far = z > self.zmax
        if np.any(far):
            out[far] = radial_profiles(arr[far], self.gamma)[which]
        return out[0] if np.ndim(rho) == 0 else out

    def perp(self, rho):
        return self._eval(rho, 0)

    def para(self, rho):
        return self._eval(rho, 1)

    def dcoef(self, rho):
        return self._eval(rho, 2)

    def matrix(self, points: np.ndarray) -> np.ndarray:
        """sigma^{ij} at points of shape (P, 3); returns (P, 3, 3)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        rho = np.sqrt(np.sum(pts * pts, axis=1))
        out = self.perp(rho)[:, None, None] * np.eye(3)
        out += self.dcoef(rho)[:, None, None] * (pts[:, :, None] * pts[:, None, :])
        return out

    def vector(self, points: np.ndarray) -> np.ndarray:
        """sigma^i = s_para(rho) v_i at points (P, 3)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        rho = np.sqrt(np.sum(pts * pts, axis=1))
        return self.para(rho)[:, None] * pts

    def save(self, path):
        np.savez(
            path,
            gamma=self.gamma,
            zmax=self.zmax,
            perp=self._perp.coef,
            para=self._para.coef,
            d=self._d.coef,
        )

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            zmax = float(data["zmax"])
            dom = [0.0, zmax]
            return cls(
                float(data["gamma"]),
                zmax,
                Chebyshev(data["perp"], domain=dom),
                Chebyshev(data["para"], domain=dom),
                Chebyshev(data["d"], domain=dom),
            )


def cache_dir() -> Path | None:
    """Directory for on-disk tables, from LANDAU_HERMITE_CACHE; None disables."""
    root = os.environ.get("LANDAU_HERMITE_CACHE")
    return Path(root) if root else None


@functools.lru_cache(maxsize=8)
def _profile_cached(gamma: float, zmax: float, degree: int) -> SigmaProfile:
    root = cache_dir()
    if root is not None:
        key = hashlib.sha256(
            f"sigma-profile|{gamma!r}|{zmax!r}|{degree}".encode()
        ).hexdigest()[:16]
        path = root / f"sigma_profile_{key}.npz"
        if path.exists():
            return SigmaProfile.load(path)
        prof = SigmaProfile.build(gamma, zmax, degree)
        root.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp.npz")
        prof.save(tmp)
        os.replace(tmp, path)
        return prof
    return SigmaProfile.build(gamma, zmax, degree)


def sigma_profile(pot: Potential, zmax: float = 784.0, degree: int = 260):
    return _profile_cached(float(pot.gamma), float(zmax), int(degree))


def sigma_matrix(points, pot: Potential, profile: SigmaProfile | None = None):
    """Production sigma^{ij} values: closed form at gamma=0, table otherwise."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pot.gamma == 0:
        rho2 = np.sum(pts * pts, axis=1)
        out = (rho2 + 2.0)[:, None, None] * np.eye(3)
        out -= pts[:, :, None] * pts[:, None, :]
        return out
    if profile is None:
        profile = sigma_profile(pot)
    return profile.matrix(pts)


def sigma_vector(points, pot: Potential, profile: SigmaProfile | None = None):
    """Production sigma^i values, s_para(rho) v."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pot.gamma == 0:
        return 2.0 * pts
    if profile is None:
        profile = sigma_profile(pot)
    return profile.vector(pts)


# -- quadrature rules ------------------------------------------------------------


class TensorGaussHermite:
    """Tensor Gauss rule for the normalized Gaussian weight on R^3.

    Nodes and 1d weights come from the e^{-x^2/2} Gauss-Hermite rule; the
    packed weights are normalized so they sum to 1, making node sums equal
    expectations under the standard normal.  In the reduced convention a
    basis function psi_alpha contributes only its polynomial part at the
    nodes, so L^2(R^3) pairings of two expansion functions become plain
    weighted node sums; the rule integrates such products exactly when
    their combined polynomial degree is at most 2*n1d - 1.
    """

    kind = "tensor-gauss-hermite"

    def __init__(self, n1d: int):
        if n1d < 1:
            raise ValueError("rule needs at least one node per axis")
        self.n1d = n1d
        x, w = hermegauss(n1d)
        self.x1d = x
        self.w1d = w / math.sqrt(2.0 * math.pi)
        nodes = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1)
        self.nodes = nodes.reshape(-1, 3)
        w3 = self.w1d[:, None, None] * self.w1d[None, :, None] * self.w1d[None, None, :]
        self.weights = w3.reshape(-1)

    @property
    def max_degree(self) -> int:
        return 2 * self.n1d - 1


@functools.lru_cache(maxsize=32)
def tensor_rule(n1d: int) -> TensorGaussHermite:
    return TensorGaussHermite(n1d)


class RadialSphericalRule:
    """Exact-angular radial rule for sigma evaluation at gamma > 0.

    The spherical integral of the kernel against the Maxwellian is done in
    closed form; what remains is the Gauss-Legendre radial rule of
    `radial_profiles`.
    """

    kind = "radial-spherical"

    def __init__(self, nr: int = 200, span: float = 42.0):
        self.nr = nr
        self.span = span

    def profiles(self, rho, gamma: float):
        return radial_profiles(rho, gamma, nr=self.nr, span=self.span)


def default_rule(
    degree: int, pot: Potential, sigma_degree: int | None = None, margin: int = 4
) -> TensorGaussHermite:
    """Rule sized to integrate sigma-weighted products of basis values exactly.

    Integrands are (expansion sigma of degree Ms) x (two basis factors of
    degree <= `degree` each): polynomial degree 2*degree + Ms, met when
    2*n1d - 1 >= that.
    """
    if sigma_degree is None:
        sigma_degree = expansion_degree(pot, degree)
    n1d = degree + sigma_degree // 2 + 1 + margin
    return tensor_rule(n1d)


def sigma_ij(v, pot: Potential, rule) -> np.ndarray:
    """sigma^{ij}(v) through the given rule (the direct evaluation op).

    tensor-gauss-hermite: node sum of phi^{ij}(v - w) against the Gaussian
    (exact when gamma = 0).  radial-spherical: exact-angular profiles.
    """
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    pts = np.atleast_2d(v)
    if rule.kind == "tensor-gauss-hermite":
        out = np.empty((len(pts), 3, 3))
        for k, p in enumerate(pts):
            mats = phi_matrix(p[None, :] - rule.nodes, pot)
            out[k] = np.einsum("q,qij->ij", rule.weights, mats)
    elif rule.kind == "radial-spherical":
        rho = np.sqrt(np.sum(pts * pts, axis=1))
        perp, _, d = rule.profiles(rho, pot.gamma)
        out = perp[:, None, None] * np.eye(3)
        out += d[:, None, None] * (pts[:, :, None] * pts[:, None, :])
    else:
        raise ValueError(f"unknown rule kind {rule.kind!r}")
    return out[0] if single else out


def sigma_i(v, pot: Potential, rule) -> np.ndarray:
    """sigma^i(v) = sum_j (phi^{ij} * (v_j mu))(v) through the given rule."""
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    pts = np.atleast_2d(v)
    if rule.kind == "tensor-gauss-hermite":
        out = np.empty((len(pts), 3))
        for k, p in enumerate(pts):
            mats = phi_matrix(p[None, :] - rule.nodes, pot)
            out[k] = np.einsum("q,qij,qj->i", rule.weights, mats, rule.nodes)
    elif rule.kind == "radial-spherical":
        rho = np.sqrt(np.sum(pts * pts, axis=1))
        _, para, _ = rule.profiles(rho, pot.gamma)
        out = para[:, None] * pts
    else:
        raise ValueError(f"unknown rule kind {rule.kind!r}")
    return out[0] if single else out


# -- basis values at nodes -------------------------------------------------------


@functools.lru_cache(maxsize=4)
def _basis_values_cached(degree: int, n1d: int) -> np.ndarray:
    rule = tensor_rule(n1d)
    polys = hermite_poly_values_1d(rule.x1d, degree)
    al = ordering(degree).alphas
    n = n1d
    vals = (
        polys[:, al[:, 0]].reshape(n, 1, 1, -1)
        * polys[:, al[:, 1]].reshape(1, n, 1, -1)
        * polys[:, al[:, 2]].reshape(1, 1, n, -1)
    )
    out = vals.reshape(n**3, -1)
    out.flags.writeable = False
    return out


def basis_node_values(degree: int, rule: TensorGaussHermite) -> np.ndarray:
    """Reduced basis values at the rule's nodes, shape (nodes, modes).

    Column m holds the polynomial part of psi_alpha(m); pairings against
    another expansion function are plain `rule.weights`-weighted sums of
    value products.
    """
    return _basis_values_cached(degree, rule.n1d)


def eval_reduced_on_rule(
    coeffs: np.ndarray, degree: int, rule: TensorGaussHermite
) -> np.ndarray:
    """Values of one reduced coefficient vector at the rule's tensor nodes.

    Contracts axis by axis against the 1d polynomial tables, so the cost
    and memory stay linear in the node count even for high degrees (no
    (nodes x modes) table is formed).
    """
    al = ordering(degree).alphas
    cube = np.zeros((degree + 1,) * 3)
    cube[al[:, 0], al[:, 1], al[:, 2]] = coeffs
    p = hermite_poly_values_1d(rule.x1d, degree)
    out = np.einsum("ai,bj,ck,ijk->abc", p, p, p, cube, optimize=True)
    return out.reshape(-1)


def eval_reduced_batch_on_rule(
    coeff_mat: np.ndarray, degree: int, rule: TensorGaussHermite
) -> np.ndarray:
    """Node values for a batch of coefficient vectors, shape (nodes, batch).

    coeff_mat has one vector per column (modes, batch); the batched
    contraction shares the 1d tables across columns.
    """
    al = ordering(degree).alphas
    nb = coeff_mat.shape[1]
    cube = np.zeros((degree + 1,) * 3 + (nb,))
    cube[al[:, 0], al[:, 1], al[:, 2], :] = coeff_mat
    p = hermite_poly_values_1d(rule.x1d, degree)
    out = np.einsum("ai,bj,ck,ijkx->abcx", p, p, p, cube, optimize=True)
    return out.reshape(-1, nb)


# -- Hermite expansion of sigma ---------------------------------------------------

#: (i, j) pairs stored for the symmetric sigma, in packed order
SIGMA_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
_PAIR_SLOT = {p: k for k, p in enumerate(SIGMA_PAIRS)}
_PAIR_SLOT.update({(j, i): k for k, (i, j) in enumerate(SIGMA_PAIRS)})


def expansion_degree(pot: Potential, degree: int) -> int:
    """Default Hermite degree of the sigma expansion for work at truncation
    `degree`.

    gamma = 0 is exactly quadratic.  Otherwise 3*degree (rounded up to
    even; sigma is even) makes every Galerkin pairing built here--including
    the convolution fields with shifts up to `degree`--agree with the true
    kernel to round-off: a pairing of modes below N involves sigma
    components only up to Hermite level 2N + (shift), shift <= N.
    """
    if pot.gamma == 0:
        return 2
    m = 3 * degree
    return max(2, m + m % 2)


class SigmaExpansion:
    """Hermite coefficients of sigma^{ij} up to a fixed even degree.

    coeffs[k] holds the reduced-basis (probabilists' Hermite, orthonormal
    under the standard normal) coefficients of sigma^{ij} for the packed
    pair SIGMA_PAIRS[k], flat in the shared simplex ordering.
    """

    def __init__(self, pot: Potential, degree: int, coeffs: np.ndarray):
        self.pot = pot
        self.degree = degree
        self.coeffs = coeffs

    def coeff(self, i: int, j: int) -> np.ndarray:
        return self.coeffs[_PAIR_SLOT[(i, j)]]

    def values(self, i: int, j: int, rule: TensorGaussHermite) -> np.ndarray:
        """Expansion values of sigma^{ij} at the rule's nodes."""
        return eval_reduced_on_rule(self.coeff(i, j), self.degree, rule)

    def truncation_residual(self, rule: TensorGaussHermite) -> float:
        """Max node-weighted rms gap between expansion and true sigma.

        sum_q W_q (sigma~ - sigma)^2 per component; a measure of the
        expansion tail in the Gaussian-weighted sense that the Galerkin
        pairings live in.
        """
        true_vals = sigma_matrix(rule.nodes, self.pot)
        worst = 0.0
        for i, j in SIGMA_PAIRS:
            diff = self.values(i, j, rule) - true_vals[:, i, j]
            worst = max(worst, math.sqrt(float(rule.weights @ diff**2)))
        return worst


@functools.lru_cache(maxsize=8)
def _expansion_cached(gamma: float, degree: int, n1d: int) -> SigmaExpansion:
    pot = Potential(gamma)
    x, w = hermegauss(n1d)
    wn = w / math.sqrt(2.0 * math.pi)
    polys = hermite_poly_values_1d(x, degree)
    weighted = polys * wn[:, None]
    grid = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
    rho = np.sqrt(np.sum(grid * grid, axis=1))
    if pot.gamma == 0:
        perp, para, d = _gamma0_profiles(rho)
    else:
        prof = sigma_profile(pot)
        perp, d = prof.perp(rho), prof.dcoef(rho)
    shape = (n1d, n1d, n1d)
    vx = grid[:, 0].reshape(shape)
    vy = grid[:, 1].reshape(shape)
    vz = grid[:, 2].reshape(shape)
    perp = perp.reshape(shape)
    d = d.reshape(shape)
    comps = {
        (0, 0): perp + d * vx * vx,
        (1, 1): perp + d * vy * vy,
        (2, 2): perp + d * vz * vz,
        (0, 1): d * vx * vy,
        (0, 2): d * vx * vz,
        (1, 2): d * vy * vz,
    }
    ordo = ordering(degree)
    coeffs = np.empty((6, ordo.modes))
    for k, pair in enumerate(SIGMA_PAIRS):
        cube = np.einsum(
            "abc,ai,bj,ck->ijk", comps[pair], weighted, weighted, weighted,
            optimize=True,
        )
        coeffs[k] = cube[ordo.alphas[:, 0], ordo.alphas[:, 1], ordo.alphas[:, 2]]
    return SigmaExpansion(pot, degree, coeffs)


def sigma_expansion(
    pot: Potential, degree: int | None = None, trunc_degree: int | None = None,
    n1d: int | None = None,
) -> SigmaExpansion:
    """Hermite expansion of sigma, cached per (gamma, degree).

    Give either the expansion degree directly or the working truncation
    degree (the default expansion degree for it is used).  The projection
    grid default n1d = degree + 16 was validated against refinement.
    """
    if degree is None:
        if trunc_degree is None:
            raise ValueError("need degree or trunc_degree")
        degree = expansion_degree(pot, trunc_degree)
    if n1d is None:
        n1d = degree + 16
    return _expansion_cached(float(pot.gamma), int(degree), int(n1d))


# -- convolution fields ------------------------------------------------------------

# phi^{ij} * (sqrt(mu) psi_beta) = ((-1)^{|beta|}/sqrt(beta!)) d^beta sigma^{ij}
# (repeated use of d_j(sqrt(mu) f) = -sqrt(mu) A_{+,j} f inside the
# convolution).  In reduced coefficients a derivative is a downshift,
# d^beta: c_rho <- c_{rho+beta} sqrt((rho+beta)!/rho!), so the whole field
# for an expansion f is one matrix apply.


@functools.lru_cache(maxsize=64)
def _conv_matrix_cached(gamma, sig_degree, slot, f_degree) -> np.ndarray:
    exp = sigma_expansion(Potential(gamma), degree=sig_degree)
    c = exp.coeffs[slot]
    ord_s = ordering(sig_degree)
    ord_f = ordering(f_degree)
    rho = ord_s.alphas
    out = np.zeros((ord_s.modes, ord_f.modes))
    cube = ord_s.cube
    for col, beta in enumerate(ord_f.alphas):
        tgt = rho + beta[None, :]
        ok = tgt.sum(axis=1) <= sig_degree
        idx = cube[tgt[ok, 0], tgt[ok, 1], tgt[ok, 2]]
        binom = np.ones(ok.sum())
        for k in range(3):
            b = int(beta[k])
            if b:
                r = rho[ok, k].astype(np.float64)
                # product_{t=1..b} (r+t)/t, exact small integers
                fac = np.ones_like(r)
                for t in range(1, b + 1):
                    fac *= (r + t) / t
                binom *= fac
        sign = -1.0 if (int(beta.sum()) % 2) else 1.0
        out[ok, col] = sign * np.sqrt(binom) * c[idx]
    out.flags.writeable = False
    return out


def conv_matrix(pot: Potential, i: int, j: int, f_degree: int, sig_degree: int):
    """Matrix sending reduced coefficients of f to those of phi^{ij}*(sqrt(mu) f).

    Shape (modes at sig_degree, modes at f_degree); the field is a
    polynomial of degree <= sig_degree by construction.
    """
    return _conv_matrix_cached(
        float(pot.gamma), int(sig_degree), _PAIR_SLOT[(i, j)], int(f_degree)
    )


def conv_field_coeffs(
    f: CoeffTensor, i: int, j: int, pot: Potential, sig_degree: int
) -> np.ndarray:
    """Reduced coefficients (at sig_degree) of phi^{ij} * (sqrt(mu) f)."""
    return conv_matrix(pot, i, j, f.degree, sig_degree) @ f.values


def conv_sqrtmu(
    f: CoeffTensor,
    i: int,
    j: int,
    points,
    pot: Potential,
    method: str = "auto",
    rule: TensorGaussHermite | None = None,
    sig_degree: int | None = None,
) -> np.ndarray:
    """(phi^{ij} * (sqrt(mu) f)) evaluated at the given points.

    method "expansion" uses the derivative-downshift route (exact at
    gamma=0, expansion-truncated otherwise); "direct" integrates
    phi^{ij}(v - w) sqrt(mu(w)) f(w) over the nodes of `rule` (exact at
    gamma=0 for a rule matching f's degree).  "auto" picks expansion.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if method == "auto":
        method = "expansion"
    if method == "expansion":
        if sig_degree is None:
            sig_degree = expansion_degree(pot, f.degree)
        coeffs = conv_field_coeffs(f, i, j, pot, sig_degree)
        al = ordering(sig_degree).alphas
        p1 = hermite_poly_values_1d(pts[:, 0], sig_degree)
        p2 = hermite_poly_values_1d(pts[:, 1], sig_degree)
        p3 = hermite_poly_values_1d(pts[:, 2], sig_degree)
        return (p1[:, al[:, 0]] * p2[:, al[:, 1]] * p3[:, al[:, 2]]) @ coeffs
    if method == "direct":
        if rule is None:
            rule = tensor_rule(f.degree // 2 + 6)
        fvals = basis_node_values(f.degree, rule) @ f.values
        out = np.empty(len(pts))
        for k, p in enumerate(pts):
            mats = phi_matrix(p[None, :] - rule.nodes, pot)
            out[k] = float(rule.weights @ (mats[:, i, j] * fvals))
        return out
    raise ValueError(f"unknown method {method!r}")
