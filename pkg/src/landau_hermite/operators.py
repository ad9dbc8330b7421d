"""Galerkin assembly and application of the linearized collision operators.

The linearized Landau operator near the unit Maxwellian splits as
L = L1 + L2 with the ladder representations

    L1 g     =  sum_{ij} A_{+,i} { sigma^{ij} A_{-,j} g },
    L2 f     = -sum_{ij} A_{+,i} { sqrt(mu) (phi^{ij} * (sqrt(mu) A_{-,j} f)) },
    Gamma(f,g) = sum_{ij} A_{+,i} { (phi^{ij} * (sqrt(mu) f)) A_{+,j} g }
               - sum_{ij} A_{+,i} { (phi^{ij} * (sqrt(mu) A_{+,j} f)) g },

and the equation for the perturbation is dt g = -L g + Gamma(g, g).

Every outer A_{+,i} is moved onto the test function as A_{-,i}; this is
exact in the untruncated space and is the single assembly route used here.
Matrix entries are then plain weighted node sums of reduced values.  At
gamma = 0 the kernel data is polynomial and every integral below is exact;
at gamma > 0 sigma is replaced by its Hermite expansion of degree Ms,
which leaves any pairing over modes |alpha| <= N unchanged as long as Ms
is at least the total polynomial degree the pairing can see (the default
from kernel.expansion_degree is comfortably above it), so the operator
identities hold to round-off for every hard potential.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from . import hermite_core as hc
from . import kernel as kn
from .hermite_core import CoeffTensor, Truncation

__all__ = [
    "GalerkinOperator",
    "NormReport",
    "assemble_L1",
    "closed_form_L1_gamma0",
    "assemble_L2",
    "assemble_sigma_gram",
    "apply_gamma",
    "assemble_gamma_partial",
    "sigma_norm_sq",
    "sigma_norm_grad_sq",
    "weighted_norm_sq",
    "project_along_v",
    "collision_invariants",
    "ladder_grad_pairing",
    "sigma_vector_coeffs",
]


@dataclass(frozen=True)
class GalerkinOperator:
    """Dense matrix of an operator over the truncated basis.

    entries[a, b] = <Op psi_beta, psi_alpha> in the shared graded ordering,
    so application is a plain matvec on coefficient vectors.
    """

    trunc: Truncation
    entries: np.ndarray
    tag: str

    def __post_init__(self):
        n = self.trunc.modes
        if self.entries.shape != (n, n):
            raise ValueError("entry matrix does not match truncation")

    def apply(self, g: CoeffTensor) -> CoeffTensor:
        if g.degree > self.trunc.degree:
            raise ValueError("input exceeds operator truncation")
        vec = g.pad_to(self.trunc.degree).values
        return CoeffTensor(self.trunc, self.entries @ vec, copy=False)

    def symmetry_gap(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.T)))

    def save(self, path) -> None:
        np.savez(
            path,
            degree=self.trunc.degree,
            entries=self.entries,
            tag=np.bytes_(self.tag.encode()),
            ordering=np.bytes_(hc.ORDERING_TAG.encode()),
        )

    @classmethod
    def load(cls, path) -> "GalerkinOperator":
        with np.load(path) as data:
            if bytes(data["ordering"]).decode() != hc.ORDERING_TAG:
                raise ValueError("operator file uses a different mode ordering")
            return cls(
                Truncation(int(data["degree"])),
                np.array(data["entries"]),
                bytes(data["tag"]).decode(),
            )

    def save_text(self, path) -> None:
        from scipy.io import mmwrite

        mmwrite(str(path), self.entries, comment=f"tag={self.tag}")


@dataclass(frozen=True)
class NormReport:
    """sigma-norm of one state, with its internal cross-checks and parts.

    The two routes evaluate the same integral through different operator
    compositions (direct: derivative and multiplication parts; ladder:
    symmetrized A_-/A_+ form) and must agree to quadrature tolerance.
    The split parts decompose the ladder gradients along/orthogonal to v
    with the anisotropic weights that the sigma-norm is equivalent to.
    """

    sigma_norm_sq: float
    sigma_norm_sq_ladder: float
    route_gap: float
    grad_weighted_sq: float
    mass_weighted_sq: float
    split_along_sq: float
    split_orth_sq: float


# -- ladder matrices and node values ----------------------------------------------


@functools.lru_cache(maxsize=24)
def _lowering_matrix(degree: int, axis: int) -> np.ndarray:
    """Dense matrix of A_{-,axis} from degree to degree-1 coefficients."""
    if degree < 1:
        return np.zeros((1, 1))
    src = hc.ordering(degree)
    dst = hc.ordering(degree - 1)
    out = np.zeros((dst.modes, src.modes))
    al = src.alphas
    has = al[:, axis] > 0
    shifted = al[has].copy()
    shifted[:, axis] -= 1
    rows = dst.cube[shifted[:, 0], shifted[:, 1], shifted[:, 2]]
    out[rows, np.nonzero(has)[0]] = np.sqrt(al[has, axis])
    return out


def _ladder_down_values(degree: int, rule: kn.TensorGaussHermite, bmax: np.ndarray):
    """Node values of A_{-,i} psi_beta for all |beta| <= degree, per axis.

    bmax must be the basis table at a degree >= degree; graded ordering
    makes lower-degree tables prefixes of it.
    """
    if degree == 0:
        z = np.zeros((bmax.shape[0], 1))
        return [z, z, z]
    nlow = hc.ordering(degree - 1).modes
    blow = bmax[:, :nlow]
    return [blow @ _lowering_matrix(degree, ax) for ax in range(3)]


def _sigma_node_values(
    pot: kn.Potential,
    rule: kn.TensorGaussHermite,
    source: str = "auto",
    msig: int | None = None,
) -> np.ndarray:
    """(P, 3, 3) sigma values at the rule's nodes from the chosen source.

    "auto" is the assembly-consistent choice: closed form at gamma = 0,
    Hermite expansion otherwise.  "profile" forces the tabulated true
    kernel (for cross-validation; quadrature-converged only).
    """
    if source == "profile" or (source == "auto" and pot.gamma == 0):
        return kn.sigma_matrix(rule.nodes, pot)
    if source in ("auto", "expansion"):
        if msig is None:
            raise ValueError("expansion source needs msig")
        exp = kn.sigma_expansion(pot, degree=msig)
        out = np.empty((len(rule.nodes), 3, 3))
        for i, j in kn.SIGMA_PAIRS:
            vals = exp.values(i, j, rule)
            out[:, i, j] = vals
            out[:, j, i] = vals
        return out
    raise ValueError(f"unknown sigma source {source!r}")


def sigma_vector_coeffs(pot: kn.Potential, msig: int) -> np.ndarray:
    """Reduced coefficients (degree msig) of sigma^i, stacked (3, modes).

    Built from the same expansion as the convolution fields through
    sigma^i = sum_j phi^{ij} * (sqrt(mu) psi_{e_j}), keeping every term of
    an identity check on one sigma discretization.
    """
    out = np.zeros((3, hc.ordering(msig).modes))
    for i in range(3):
        for j in range(3):
            ej = [0, 0, 0]
            ej[j] = 1
            f = hc.basis_tensor(Truncation(1), tuple(ej))
            out[i] += kn.conv_field_coeffs(f, i, j, pot, msig)
    return out


# -- assembly -----------------------------------------------------------------------


def assemble_L1(
    trunc: Truncation,
    pot: kn.Potential,
    rule: kn.TensorGaussHermite | None = None,
    sigma_source: str = "auto",
    msig: int | None = None,
) -> GalerkinOperator:
    """Galerkin matrix of L1 via <sigma^{ij} A_{-,j} psi_b, A_{-,i} psi_a>."""
    n = trunc.degree
    if msig is None:
        msig = kn.expansion_degree(pot, n)
    if rule is None:
        rule = kn.default_rule(n, pot, sigma_degree=msig)
    bmax = kn.basis_node_values(n, rule)
    down = _ladder_down_values(n, rule, bmax)
    sig = _sigma_node_values(pot, rule, sigma_source, msig)
    out = np.zeros((trunc.modes, trunc.modes))
    for i in range(3):
        for j in range(3):
            out += down[i].T @ (
                (rule.weights * sig[:, i, j])[:, None] * down[j]
            )
    return GalerkinOperator(trunc, out, "L1")


def closed_form_L1_gamma0(trunc: Truncation) -> GalerkinOperator:
    """Exact gamma = 0 operator 2(H - 3/2) - Lap_{S^2}, no quadrature.

    H - 3/2 is diagonal with entry |alpha|; the spherical Laplacian is
    built from the rotation generators R_ij = A_{+,i}A_{-,j} - A_{+,j}A_{-,i}
    as Lap_{S^2} = sum_{i<j} R_ij^2.  Both pieces preserve energy levels,
    so the truncated matrix is the exact Galerkin operator.
    """
    n = trunc.degree
    modes = trunc.modes
    orders = hc.ordering(n).orders.astype(np.float64)
    out = 2.0 * np.diag(orders)
    low = [_lowering_matrix(n, ax) for ax in range(3)]
    for i in range(3):
        for j in range(i + 1, 3):
            rot = low[i].T @ low[j] - low[j].T @ low[i]
            out -= rot @ rot
    return GalerkinOperator(trunc, out, "L1")


def assemble_L2(
    trunc: Truncation,
    pot: kn.Potential,
    rule: kn.TensorGaussHermite | None = None,
    msig: int | None = None,
) -> GalerkinOperator:
    """Galerkin matrix of L2.

    Entry (a, b) = -sum_{ij} int (phi^{ij} * (sqrt(mu) A_{-,j} psi_b))
    sqrt(mu) A_{-,i} psi_a; in reduced values sqrt(mu) contributes the
    constant 1, the field comes from the convolution matrices.
    """
    n = trunc.degree
    if msig is None:
        msig = kn.expansion_degree(pot, n)
    if rule is None:
        rule = kn.default_rule(n, pot, sigma_degree=msig)
    bmax = kn.basis_node_values(n, rule)
    down = _ladder_down_values(n, rule, bmax)
    out = np.zeros((trunc.modes, trunc.modes))
    if n == 0:
        return GalerkinOperator(trunc, out, "L2")
    fdeg = n - 1
    for i in range(3):
        for j in range(3):
            cm = kn.conv_matrix(pot, i, j, fdeg, msig)
            field = kn.eval_reduced_batch_on_rule(
                cm @ _lowering_matrix(n, j), msig, rule
            )
            out -= down[i].T @ (rule.weights[:, None] * field)
    return GalerkinOperator(trunc, out, "L2")


def assemble_sigma_gram(
    trunc: Truncation,
    pot: kn.Potential,
    rule: kn.TensorGaussHermite | None = None,
    sigma_source: str = "auto",
    msig: int | None = None,
) -> GalerkinOperator:
    """Gram matrix of the sigma inner product over the truncated basis.

    Uses the ladder form (1/2) sum_ij int sigma^{ij} (A_{-,i}psi_a A_{-,j}psi_b
    + A_{+,i}psi_a A_{+,j}psi_b), so g.(S g) equals sigma_norm_sq(g) for any g
    in the truncation and the per-state quadrature is paid once at assembly.
    """
    n = trunc.degree
    if msig is None:
        msig = kn.expansion_degree(pot, n)
    if rule is None:
        # raised factors reach degree n+1 on both sides
        rule = kn.default_rule(n + 1, pot, sigma_degree=msig)
    bmax = kn.basis_node_values(n + 1, rule)
    down = _ladder_down_values(n, rule, bmax)
    up = [bmax @ _lowering_matrix(n + 1, ax).T[:, : trunc.modes] for ax in range(3)]
    sig = _sigma_node_values(pot, rule, sigma_source, msig)
    out = np.zeros((trunc.modes, trunc.modes))
    for i in range(3):
        for j in range(3):
            w = (rule.weights * sig[:, i, j])[:, None]
            out += 0.5 * (down[i].T @ (w * down[j]) + up[i].T @ (w * up[j]))
    return GalerkinOperator(trunc, out, "sigma")


def _gamma_rule(
    pot: kn.Potential, gdeg: int, out_degree: int, msig: int
) -> kn.TensorGaussHermite:
    # integrand degree: conv field (msig) x raised g (gdeg+1) x lowered test
    n1d = (msig + gdeg + 1 + max(out_degree - 1, 0)) // 2 + 3
    return kn.tensor_rule(n1d)


def apply_gamma(
    f: CoeffTensor,
    g: CoeffTensor,
    pot: kn.Potential,
    out_degree: int | None = None,
    rule: kn.TensorGaussHermite | None = None,
    msig: int | None = None,
) -> CoeffTensor:
    """Galerkin projection of Gamma(f, g) onto |alpha| <= out_degree."""
    if out_degree is None:
        out_degree = max(f.degree, g.degree)
    if msig is None:
        msig = kn.expansion_degree(pot, max(f.degree, g.degree, out_degree))
    if rule is None:
        rule = _gamma_rule(pot, g.degree, out_degree, msig)
    top = max(g.degree + 1, out_degree)
    bmax = kn.basis_node_values(top, rule)

    gvals = bmax[:, : hc.ordering(g.degree).modes] @ g.values
    gup = [hc.raise_mode(g, ax) for ax in range(3)]
    nup = hc.ordering(g.degree + 1).modes
    gupvals = [bmax[:, :nup] @ t.values for t in gup]
    fup = [hc.raise_mode(f, ax) for ax in range(3)]

    down = _ladder_down_values(out_degree, rule, bmax)
    trunc = Truncation(out_degree)
    out = np.zeros(trunc.modes)
    for i in range(3):
        acc = np.zeros(len(rule.weights))
        for j in range(3):
            f1 = kn.eval_reduced_on_rule(
                kn.conv_field_coeffs(f, i, j, pot, msig), msig, rule
            )
            f2 = kn.eval_reduced_on_rule(
                kn.conv_field_coeffs(fup[j], i, j, pot, msig), msig, rule
            )
            acc += f1 * gupvals[j] - f2 * gvals
        out += down[i].T @ (rule.weights * acc)
    return CoeffTensor(trunc, out, copy=False)


def assemble_gamma_partial(
    f: CoeffTensor,
    trunc: Truncation,
    pot: kn.Potential,
    rule: kn.TensorGaussHermite | None = None,
    msig: int | None = None,
) -> GalerkinOperator:
    """Matrix of g -> Gamma(f, g) over the truncation (IMEX Jacobian use)."""
    n = trunc.degree
    if msig is None:
        msig = kn.expansion_degree(pot, max(f.degree, n))
    if rule is None:
        rule = _gamma_rule(pot, n, n, msig)
    bmax = kn.basis_node_values(n + 1, rule)
    bn = bmax[:, : trunc.modes]
    down = _ladder_down_values(n, rule, bmax)
    raised = [bmax @ _lowering_matrix(n + 1, ax).T for ax in range(3)]
    fup = [hc.raise_mode(f, ax) for ax in range(3)]
    out = np.zeros((trunc.modes, trunc.modes))
    for i in range(3):
        acc = np.zeros((len(rule.weights), trunc.modes))
        for j in range(3):
            f1 = kn.eval_reduced_on_rule(
                kn.conv_field_coeffs(f, i, j, pot, msig), msig, rule
            )
            f2 = kn.eval_reduced_on_rule(
                kn.conv_field_coeffs(fup[j], i, j, pot, msig), msig, rule
            )
            acc += f1[:, None] * raised[j] - f2[:, None] * bn
        out += down[i].T @ (rule.weights[:, None] * acc)
    return GalerkinOperator(trunc, out, f"GammaPartial(deg={f.degree})")


# -- norms --------------------------------------------------------------------------


def _norm_rule(pot: kn.Potential, degree: int, msig: int) -> kn.TensorGaussHermite:
    n1d = (2 * (degree + 1) + msig) // 2 + 4
    return kn.tensor_rule(n1d)


def sigma_norm_sq(
    g: CoeffTensor,
    pot: kn.Potential,
    rule: kn.TensorGaussHermite | None = None,
    sigma_source: str = "auto",
    msig: int | None = None,
) -> NormReport:
    """The anisotropic sigma-norm of g with internal consistency data.

    Direct route: sum_{ij} int sigma^{ij} (d_i g d_j g + v_i v_j g^2 / 4).
    Ladder route: (1/2) sum_{ij} int sigma^{ij} (A_{-,i}g A_{-,j}g
    + A_{+,i}g A_{+,j}g).  Both are assembled from the same sigma values,
    so the gap measures pure composition round-off.
    """
    if msig is None:
        msig = kn.expansion_degree(pot, g.degree + 1)
    if rule is None:
        rule = _norm_rule(pot, g.degree, msig)
    sig = _sigma_node_values(pot, rule, sigma_source, msig)
    top = g.degree + 1
    bmax = kn.basis_node_values(top, rule)

    def vals(t: CoeffTensor) -> np.ndarray:
        return bmax[:, : hc.ordering(t.degree).modes] @ t.values

    dg = [vals(hc.diff_v(g, ax)) for ax in range(3)]
    vg = [vals(hc.mult_v(g, ax)) for ax in range(3)]
    up = [vals(hc.raise_mode(g, ax)) for ax in range(3)]
    dn = [vals(hc.lower_mode(g, ax)) for ax in range(3)]
    w = rule.weights
    direct = 0.0
    ladder = 0.0
    for i in range(3):
        for j in range(3):
            s = sig[:, i, j]
            direct += float(w @ (s * (dg[i] * dg[j] + 0.25 * vg[i] * vg[j])))
            ladder += 0.5 * float(w @ (s * (dn[i] * dn[j] + up[i] * up[j])))

    # weighted comparison norms and the anisotropic split of the ladder
    # gradients; <v>^2 = 1 + |v|^2
    jb2 = 1.0 + np.sum(rule.nodes**2, axis=1)
    gv = vals(g)
    half_g = 0.5 * pot.gamma
    mass = float(w @ (jb2 ** (half_g + 1.0) * gv * gv))
    grad = 0.0
    for i in range(3):
        grad += float(w @ (jb2**half_g * dg[i] * dg[i]))
    along = 0.0
    orth = 0.0
    for fields in (up, dn):
        stack = np.stack(fields, axis=1)
        par, perp = project_along_v(stack, rule.nodes)
        along += 0.5 * float(w @ (jb2**half_g * np.sum(par * par, axis=1)))
        orth += 0.5 * float(
            w @ (jb2 ** (half_g + 1.0) * np.sum(perp * perp, axis=1))
        )
    return NormReport(
        sigma_norm_sq=direct,
        sigma_norm_sq_ladder=ladder,
        route_gap=abs(direct - ladder),
        grad_weighted_sq=grad,
        mass_weighted_sq=mass,
        split_along_sq=along,
        split_orth_sq=orth,
    )


def sigma_norm_grad_sq(
    g: CoeffTensor,
    m: int,
    pot: kn.Potential,
    sigma_source: str = "auto",
    msig: int | None = None,
) -> float:
    """sum_{|a| = m} (m!/a!) |||A_+^a g|||_sigma^2, the gradient sigma-norm."""
    if m == 0:
        return sigma_norm_sq(g, pot, sigma_source=sigma_source, msig=msig).sigma_norm_sq
    total = 0.0
    for alpha, weight in _level_multiindices(m):
        t = _apply_raise_multi(g, alpha)
        total += weight * sigma_norm_sq(
            t, pot, sigma_source=sigma_source, msig=msig
        ).sigma_norm_sq
    return total


def weighted_norm_sq(
    g: CoeffTensor, s: float, rule: kn.TensorGaussHermite | None = None
) -> float:
    """||<v>^s g||^2 by quadrature; s = 0 recovers the Parseval norm."""
    if rule is None:
        extra = max(int(math.ceil(abs(s))), 0) + 4
        rule = kn.tensor_rule(g.degree + extra)
    gv = kn.basis_node_values(g.degree, rule) @ g.values
    jb2 = 1.0 + np.sum(rule.nodes**2, axis=1)
    return float(rule.weights @ (jb2**s * gv * gv))


def project_along_v(values: np.ndarray, nodes: np.ndarray):
    """Split a vector field sampled at nodes into parts along/orthogonal to v.

    P_v G = (G . v) v / |v|^2; at v = 0 the parallel part is defined as 0,
    so parallel + orthogonal = G everywhere.
    """
    r2 = np.sum(nodes * nodes, axis=1)
    safe = np.where(r2 == 0.0, 1.0, r2)
    coef = np.sum(values * nodes, axis=1) / safe
    par = coef[:, None] * nodes
    return par, values - par


# -- invariants and pairings ----------------------------------------------------------


def collision_invariants(trunc: Truncation) -> list[CoeffTensor]:
    """Mass, momentum, energy directions inside the truncation.

    sqrt(mu) = psi_0; v_j sqrt(mu) = psi_{e_j}; |v|^2 sqrt(mu)
    = 3 psi_0 + sqrt(2) (psi_(2,0,0) + psi_(0,2,0) + psi_(0,0,2)),
    all from exact ladder coefficients.
    """
    if trunc.degree < 2:
        raise ValueError("need degree >= 2 to hold the energy invariant")
    out = [hc.basis_tensor(trunc, (0, 0, 0))]
    for ax in range(3):
        e = [0, 0, 0]
        e[ax] = 1
        out.append(hc.basis_tensor(trunc, tuple(e)))
    energy = 3.0 * hc.basis_tensor(trunc, (0, 0, 0))
    for ax in range(3):
        e = [0, 0, 0]
        e[ax] = 2
        energy = energy + math.sqrt(2.0) * hc.basis_tensor(trunc, tuple(e))
    out.append(energy.pad_to(trunc.degree))
    return out


def _level_multiindices(m: int):
    """(alpha, m!/alpha!) for |alpha| = m."""
    ordo = hc.ordering(m)
    fact_m = math.factorial(m)
    for row in ordo.alphas[ordo.level_slices[m]]:
        a = tuple(int(x) for x in row)
        w = fact_m / (
            math.factorial(a[0]) * math.factorial(a[1]) * math.factorial(a[2])
        )
        yield a, w


def _apply_raise_multi(g: CoeffTensor, alpha) -> CoeffTensor:
    out = g
    for ax in range(3):
        for _ in range(alpha[ax]):
            out = hc.raise_mode(out, ax)
    return out


def ladder_grad_pairing(u: CoeffTensor, w: CoeffTensor, m: int) -> float:
    """sum_{|a| = m} (m!/a!) <A_+^a u, A_+^a w>, the grad pairing of order m."""
    if m == 0:
        return hc.dot(u, w)
    total = 0.0
    for alpha, weight in _level_multiindices(m):
        total += weight * hc.dot(
            _apply_raise_multi(u, alpha), _apply_raise_multi(w, alpha)
        )
    return total
