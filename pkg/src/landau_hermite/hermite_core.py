"""Hermite basis algebra on velocity space R^3.

The basis functions are tensor products of scaled Hermite functions,

    psi_alpha(v) = phi_{a1}(v1) phi_{a2}(v2) phi_{a3}(v3),

where phi_n is the standard Hermite function rescaled so that the ground
state is the square root of the unit Maxwellian:

    phi_0(x) = (2 pi)^{-1/4} exp(-x^2/4),    psi_0 = sqrt(mu).

The family is orthonormal in L^2(R^3) and is generated by the ladder
operators

    A_{+,j} = v_j/2 - d/dv_j,    A_{-,j} = v_j/2 + d/dv_j,

with A_{+,j} psi_alpha = sqrt(a_j + 1) psi_{alpha + e_j} and
A_{-,j} psi_alpha = sqrt(a_j) psi_{alpha - e_j}.  Multiplication by v_j is
A_{+,j} + A_{-,j}, differentiation is (A_{-,j} - A_{+,j})/2, and the
harmonic oscillator -Delta + |v|^2/4 is diagonal with eigenvalue
|alpha| + 3/2 on level |alpha|.

Coefficient tensors are stored flat over the simplex |alpha| <= N in a
fixed graded lexicographic ordering (see `ordering`); the ordering is part
of the on-disk format and is versioned.
"""

from __future__ import annotations

import functools
import math
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GAUSS_GROUND",
    "ORDERING_TAG",
    "MultiIndex",
    "Truncation",
    "Ordering",
    "ordering",
    "CoeffTensor",
    "zeros",
    "basis_tensor",
    "dot",
    "raise_mode",
    "lower_mode",
    "mult_v",
    "diff_v",
    "harmonic_apply",
    "project_level",
    "retruncate",
    "grad_hplus_norm_sq",
    "grad_hplus_norm_log",
    "level_norms",
    "eval_point",
    "eval_points",
    "hermite_poly_values_1d",
    "hermite_values_1d",
    "save_tensor",
    "load_tensor",
]

#: value of psi_0 at the origin, (2 pi)^{-3/4}
GAUSS_GROUND = (2.0 * math.pi) ** (-0.75)

#: version tag of the multi-index ordering; written into serialized tensors
ORDERING_TAG = "gradedlex-v1"

# switch grad_hplus_norm_sq weight accumulation to log domain above this m
_LOG_DOMAIN_ORDER = 30


@dataclass(frozen=True)
class MultiIndex:
    """A 3d multi-index (a1, a2, a3) with non-negative entries."""

    a1: int
    a2: int
    a3: int

    def __post_init__(self):
        if min(self.a1, self.a2, self.a3) < 0:
            raise ValueError("multi-index entries must be non-negative")

    @property
    def order(self) -> int:
        return self.a1 + self.a2 + self.a3

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.a1, self.a2, self.a3)


@dataclass(frozen=True)
class Truncation:
    """Simplex truncation |alpha| <= degree of the Hermite expansion."""

    degree: int
    shape: str = "simplex"

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("truncation degree must be non-negative")
        if self.shape != "simplex":
            raise ValueError(f"unsupported truncation shape {self.shape!r}")

    @property
    def modes(self) -> int:
        n = self.degree
        return (n + 1) * (n + 2) * (n + 3) // 6


class Ordering:
    """Graded lexicographic enumeration of the simplex |alpha| <= N.

    Levels are listed in increasing order; within a level the entries are
    lexicographically decreasing in (a1, a2).  Instances are cached, build
    them through `ordering`.
    """

    def __init__(self, degree: int):
        self.degree = degree
        rows = []
        level_start = [0]
        for k in range(degree + 1):
            for a1 in range(k, -1, -1):
                for a2 in range(k - a1, -1, -1):
                    rows.append((a1, a2, k - a1 - a2))
            level_start.append(len(rows))
        self.alphas = np.array(rows, dtype=np.int32)
        self.orders = self.alphas.sum(axis=1)
        self.level_slices = [
            slice(level_start[k], level_start[k + 1]) for k in range(degree + 1)
        ]
        # dense cube lookup: cube[a1, a2, a3] = flat index, -1 off simplex
        cube = np.full((degree + 1,) * 3, -1, dtype=np.int64)
        cube[self.alphas[:, 0], self.alphas[:, 1], self.alphas[:, 2]] = np.arange(
            len(rows)
        )
        self.cube = cube

    @property
    def modes(self) -> int:
        return len(self.alphas)

    def index_of(self, alpha) -> int:
        a1, a2, a3 = alpha
        if a1 + a2 + a3 > self.degree or min(a1, a2, a3) < 0:
            raise KeyError(f"multi-index {alpha} outside truncation")
        return int(self.cube[a1, a2, a3])


@functools.lru_cache(maxsize=None)
def ordering(degree: int) -> Ordering:
    return Ordering(degree)


@functools.lru_cache(maxsize=None)
def _raise_targets(degree: int, axis: int) -> np.ndarray:
    """Flat indices in ordering(degree+1) of alpha + e_axis for alpha at `degree`."""
    ord_n = ordering(degree)
    ord_up = ordering(degree + 1)
    shifted = ord_n.alphas.copy()
    shifted[:, axis] += 1
    return ord_up.cube[shifted[:, 0], shifted[:, 1], shifted[:, 2]].copy()


class CoeffTensor:
    """Coefficients of a Hermite expansion on a simplex truncation.

    The value array is flat in the graded lexicographic ordering and is
    kept read-only; all operations return new tensors.
    """

    __slots__ = ("trunc", "values")

    def __init__(self, trunc: Truncation, values: np.ndarray, copy: bool = True):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (trunc.modes,):
            raise ValueError(
                f"expected {trunc.modes} coefficients for degree {trunc.degree}, "
                f"got shape {values.shape}"
            )
        if copy:
            values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "trunc", trunc)
        object.__setattr__(self, "values", values)

    def __setattr__(self, name, value):
        raise AttributeError("CoeffTensor is immutable")

    @property
    def degree(self) -> int:
        return self.trunc.degree

    @property
    def norm_sq(self) -> float:
        # Parseval: the basis is L^2 orthonormal
        return float(self.values @ self.values)

    def coeff(self, alpha) -> float:
        return float(self.values[ordering(self.degree).index_of(alpha)])

    def pad_to(self, degree: int) -> "CoeffTensor":
        if degree < self.degree:
            raise ValueError("pad_to cannot lower the degree; use retruncate")
        if degree == self.degree:
            return self
        out = np.zeros(Truncation(degree).modes)
        out[: self.trunc.modes] = self.values
        return CoeffTensor(Truncation(degree), out, copy=False)

    def __add__(self, other: "CoeffTensor") -> "CoeffTensor":
        n = max(self.degree, other.degree)
        a, b = self.pad_to(n), other.pad_to(n)
        return CoeffTensor(a.trunc, a.values + b.values, copy=False)

    def __sub__(self, other: "CoeffTensor") -> "CoeffTensor":
        n = max(self.degree, other.degree)
        a, b = self.pad_to(n), other.pad_to(n)
        return CoeffTensor(a.trunc, a.values - b.values, copy=False)

    def __mul__(self, scalar: float) -> "CoeffTensor":
        return CoeffTensor(self.trunc, self.values * float(scalar), copy=False)

    __rmul__ = __mul__

    def __repr__(self):
        return f"CoeffTensor(degree={self.degree}, norm={math.sqrt(self.norm_sq):.6g})"


def zeros(trunc: Truncation) -> CoeffTensor:
    return CoeffTensor(trunc, np.zeros(trunc.modes), copy=False)


def basis_tensor(trunc: Truncation, alpha) -> CoeffTensor:
    """Unit coefficient on psi_alpha."""
    vals = np.zeros(trunc.modes)
    vals[ordering(trunc.degree).index_of(tuple(alpha))] = 1.0
    return CoeffTensor(trunc, vals, copy=False)


def dot(a: CoeffTensor, b: CoeffTensor) -> float:
    """L^2 pairing; mixed truncations are aligned by zero padding."""
    n = min(a.degree, b.degree)
    m = Truncation(n).modes
    return float(a.values[:m] @ b.values[:m])


def raise_mode(g: CoeffTensor, axis: int) -> CoeffTensor:
    """Apply the raising operator A_{+,axis}; output degree grows by one."""
    _check_axis(axis)
    n = g.degree
    out = np.zeros(Truncation(n + 1).modes)
    targets = _raise_targets(n, axis)
    np.add.at(out, targets, np.sqrt(ordering(n).alphas[:, axis] + 1.0) * g.values)
    return CoeffTensor(Truncation(n + 1), out, copy=False)


def lower_mode(g: CoeffTensor, axis: int) -> CoeffTensor:
    """Apply the lowering operator A_{-,axis}; output degree drops by one."""
    _check_axis(axis)
    n = g.degree
    m = max(n - 1, 0)
    out = np.zeros(Truncation(m).modes)
    if n == 0:
        return CoeffTensor(Truncation(0), out, copy=False)
    targets = _raise_targets(n - 1, axis)  # alpha-e_axis at degree n-1 -> alpha at n
    src = ordering(n - 1).alphas[:, axis] + 1.0
    out[:] = np.sqrt(src) * g.values[targets]
    return CoeffTensor(Truncation(m), out, copy=False)


def mult_v(g: CoeffTensor, axis: int) -> CoeffTensor:
    """Multiplication by v_axis, as A_{+,axis} + A_{-,axis}."""
    up = raise_mode(g, axis)
    down = lower_mode(g, axis)
    return up + down


def diff_v(g: CoeffTensor, axis: int) -> CoeffTensor:
    """Differentiation d/dv_axis, as (A_{-,axis} - A_{+,axis})/2."""
    up = raise_mode(g, axis)
    down = lower_mode(g, axis)
    return 0.5 * (down - up)


def harmonic_apply(g: CoeffTensor, m: int) -> CoeffTensor:
    """Apply the half power H^{m/2} of the oscillator -Delta + |v|^2/4.

    Diagonal in the basis: mode alpha is scaled by (|alpha| + 3/2)^{m/2}.
    """
    if m < 0:
        raise ValueError("power m must be non-negative")
    lam = ordering(g.degree).orders + 1.5
    return CoeffTensor(g.trunc, g.values * lam ** (0.5 * m), copy=False)


def project_level(g: CoeffTensor, k: int) -> CoeffTensor:
    """Projection onto the eigenspace |alpha| = k (zero if k > degree)."""
    if k < 0:
        raise ValueError("level must be non-negative")
    out = np.zeros_like(g.values)
    if k <= g.degree:
        sl = ordering(g.degree).level_slices[k]
        out[sl] = g.values[sl]
    return CoeffTensor(g.trunc, out, copy=False)


def retruncate(g: CoeffTensor, degree: int) -> CoeffTensor:
    """Discard coefficients above `degree` (or zero-pad if degree is larger)."""
    if degree >= g.degree:
        return g.pad_to(degree)
    m = Truncation(degree).modes
    return CoeffTensor(Truncation(degree), g.values[:m])


def level_norms(g: CoeffTensor) -> np.ndarray:
    """Array of ||P_k g|| for k = 0..degree."""
    ords = ordering(g.degree)
    sq = g.values**2
    return np.sqrt(
        np.array([sq[ords.level_slices[k]].sum() for k in range(g.degree + 1)])
    )


# -- iterated raising gradient ------------------------------------------------
#
# ||grad_+^m u||^2 = sum_k ||A_{+,k} grad_+^{m-1} u||^2 collapses to a diagonal
# quadratic form sum_beta w_m(beta) u_beta^2 with weights obeying
#     w_m(beta) = sum_k (beta_k + 1) w_{m-1}(beta + e_k),   w_0 = 1,
# evaluated here in O(m * modes * 3) instead of enumerating the 3^m branches.


@functools.lru_cache(maxsize=None)
def _grad_weights(degree: int, m: int) -> np.ndarray:
    w = np.ones(Truncation(degree + m).modes)
    for step in range(m):
        d = degree + m - step - 1  # weights being built live at this degree
        ord_d = ordering(d)
        new = np.zeros(ord_d.modes)
        for k in range(3):
            targets = _raise_targets(d, k)
            new += (ord_d.alphas[:, k] + 1.0) * w[targets]
        w = new
    w.flags.writeable = False
    return w


@functools.lru_cache(maxsize=None)
def _grad_weights_log(degree: int, m: int) -> np.ndarray:
    w = np.zeros(Truncation(degree + m).modes)
    for step in range(m):
        d = degree + m - step - 1
        ord_d = ordering(d)
        new = np.full(ord_d.modes, -np.inf)
        for k in range(3):
            targets = _raise_targets(d, k)
            new = np.logaddexp(new, np.log(ord_d.alphas[:, k] + 1.0) + w[targets])
        w = new
    w.flags.writeable = False
    return w


def grad_hplus_norm_sq(g: CoeffTensor, m: int) -> float:
    """Squared norm of the order-m raising gradient of g.

    Equals sum over |alpha| = m of (m!/alpha!) ||A_+^alpha g||^2; exact on
    the truncation since raising only adds representable levels.  For m
    beyond a threshold the weights are accumulated in log domain.
    """
    if m < 0:
        raise ValueError("gradient order must be non-negative")
    if m == 0:
        return g.norm_sq
    if m > _LOG_DOMAIN_ORDER:
        return float(np.exp(grad_hplus_norm_log(g, m)))
    w = _grad_weights(g.degree, m)
    return float(w @ (g.values**2))


def grad_hplus_norm_log(g: CoeffTensor, m: int) -> float:
    """log of grad_hplus_norm_sq(g, m), stable for large m (-inf for g = 0)."""
    if m == 0:
        return math.log(g.norm_sq) if g.norm_sq > 0 else -math.inf
    logw = _grad_weights_log(g.degree, m)
    with np.errstate(divide="ignore"):
        terms = logw + 2.0 * np.log(np.abs(g.values))
    top = np.max(terms)
    if top == -np.inf:
        return -math.inf
    return float(top + np.log(np.exp(terms - top).sum()))


# -- pointwise evaluation ------------------------------------------------------


def hermite_poly_values_1d(x: np.ndarray, nmax: int) -> np.ndarray:
    """Orthonormal Hermite polynomials h_n for the weight exp(-x^2/2)/sqrt(2 pi).

    Three-term recurrence h_{n+1} = (x h_n - sqrt(n) h_{n-1})/sqrt(n+1) with
    h_0 = 1.  Returns an array of shape (len(x), nmax+1).  These are the
    Gaussian-free parts of the basis: psi_alpha = (2 pi)^{-3/4}
    exp(-|v|^2/4) prod_j h_{a_j}(v_j).
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape + (nmax + 1,))
    out[..., 0] = 1.0
    if nmax >= 1:
        out[..., 1] = x
    for n in range(1, nmax):
        out[..., n + 1] = (x * out[..., n] - math.sqrt(n) * out[..., n - 1]) / math.sqrt(
            n + 1
        )
    return out


def hermite_values_1d(x: np.ndarray, nmax: int) -> np.ndarray:
    """Scaled Hermite functions phi_n(x), including the Gaussian factor."""
    x = np.asarray(x, dtype=np.float64)
    polys = hermite_poly_values_1d(x, nmax)
    gauss = (2.0 * math.pi) ** (-0.25) * np.exp(-0.25 * x * x)
    return polys * gauss[..., None]


def eval_points(g: CoeffTensor, points: np.ndarray) -> np.ndarray:
    """Evaluate the expansion at an array of points with shape (P, 3)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[1] != 3:
        raise ValueError("points must have shape (P, 3)")
    n = g.degree
    v1 = hermite_values_1d(pts[:, 0], n)
    v2 = hermite_values_1d(pts[:, 1], n)
    v3 = hermite_values_1d(pts[:, 2], n)
    al = ordering(n).alphas
    return (v1[:, al[:, 0]] * v2[:, al[:, 1]] * v3[:, al[:, 2]]) @ g.values


def eval_point(g: CoeffTensor, v) -> float:
    """Evaluate the expansion at a single velocity point."""
    return float(eval_points(g, np.asarray(v, dtype=np.float64).reshape(1, 3))[0])


# -- serialization -------------------------------------------------------------

_MAGIC = b"HGCT"
_FORMAT_VERSION = 1


def save_tensor(path, g: CoeffTensor) -> None:
    """Write a coefficient tensor: header (magic, version, degree, ordering
    tag) followed by little-endian float64 coefficients."""
    tag = ORDERING_TAG.encode("ascii")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HHI", _FORMAT_VERSION, len(tag), g.degree))
        fh.write(tag)
        fh.write(np.ascontiguousarray(g.values, dtype="<f8").tobytes())


def load_tensor(path) -> CoeffTensor:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a coefficient tensor file")
        version, taglen, degree = struct.unpack("<HHI", fh.read(8))
        if version != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {version}")
        tag = fh.read(taglen).decode("ascii")
        if tag != ORDERING_TAG:
            raise ValueError(f"{path}: ordering {tag!r} does not match {ORDERING_TAG!r}")
        trunc = Truncation(degree)
        data = np.frombuffer(fh.read(8 * trunc.modes), dtype="<f8")
        if data.size != trunc.modes:
            raise ValueError(f"{path}: truncated coefficient data")
    return CoeffTensor(trunc, data)


def _check_axis(axis: int) -> None:
    if axis not in (0, 1, 2):
        raise ValueError("axis must be 0, 1 or 2")
