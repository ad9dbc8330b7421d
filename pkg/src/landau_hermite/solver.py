"""Time integration of the truncated system dg/dt = -(L1 + L2) g + Gamma(g, g).

The linear part is stiff: its spectrum grows with the mode order, so the
step treats it implicitly through a factorization computed once per run,
while the bilinear term is evaluated explicitly at the current state and
projected back onto the truncation (standard Galerkin closure).  Two
schemes are provided:

  imex-euler   (I + dt L) g' = g + dt Gamma(g, g)
  imex-cn      (I + dt/2 L) g' = (I - dt/2 L) g + dt Gamma(g, g)

Both are single-step maps; imex-cn is trapezoidal only in the linear part.

Alongside the state the run records, per step, the squared L2 norm, the
sigma norm (through a precomputed Gram matrix, so the quadrature is paid
at assembly time), its running time integral, the energy balance residual

  r = (|g'|^2 - |g|^2) / dt + 2<L1 g, g> + 2<L2 g, g> - 2<Gamma(g, g), g>

evaluated at the step's starting state (first order in dt by construction,
which is what the scheme-order refinement check measures), and the
coordinates of the state along the orthonormalized collision invariants,
whose per-step drift is a conservation diagnostic.

The closed-form comparator `reference_heat_flow` evolves coefficients by
the oscillator semigroup, exact for the Maxwellian-exponent case only.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from . import hermite_core as hc
from . import kernel as kn
from . import operators as op
from .hermite_core import CoeffTensor, Truncation

__all__ = [
    "SimConfig",
    "SolverOps",
    "StepRejected",
    "Trajectory",
    "prepare",
    "step",
    "simulate",
    "reference_heat_flow",
    "initial_datum",
    "gronwall_rate",
]

SCHEMES = ("imex-euler", "imex-cn")


@dataclass(frozen=True)
class SimConfig:
    """Run parameters for one integration.

    sigma_degree overrides the kernel expansion degree used for assembly
    and the bilinear term (None picks the production default for the
    truncation).  snapshot_every stores a full coefficient snapshot every
    k-th step; norm summaries are recorded at every step regardless.
    """

    pot: kn.Potential
    trunc: Truncation
    dt: float
    t_end: float
    scheme: str = "imex-euler"
    epsilon0: float = 1e-3
    seed: int = 0
    sigma_degree: int | None = None
    snapshot_every: int = 10

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < self.dt:
            raise ValueError("t_end must cover at least one step")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}, have {SCHEMES}")
        if self.epsilon0 <= 0:
            raise ValueError("epsilon0 must be positive")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")

    @property
    def n_steps(self) -> int:
        # t_end is rounded to a whole number of steps
        return max(1, int(round(self.t_end / self.dt)))


class StepRejected(RuntimeError):
    """Raised when a step leaves the trust region or produces non-finite values."""


@dataclass(frozen=True, eq=False)
class SolverOps:
    """Assembled matrices and the factorized implicit solve for one config."""

    cfg: SimConfig
    lin: np.ndarray
    lu: tuple
    rhs_mat: np.ndarray | None
    sigma_gram: np.ndarray
    inv_frame: np.ndarray
    gamma_rule: kn.TensorGaussHermite
    msig: int

    def compatible(self, cfg: SimConfig) -> bool:
        a, b = self.cfg, cfg
        return (
            a.pot == b.pot
            and a.trunc.degree == b.trunc.degree
            and a.dt == b.dt
            and a.scheme == b.scheme
            and a.sigma_degree == b.sigma_degree
        )


def _invariant_frame(trunc: Truncation) -> np.ndarray:
    """Orthonormal columns spanning the collision invariants."""
    cols = np.column_stack([q.values for q in op.collision_invariants(trunc)])
    q, _ = np.linalg.qr(cols)
    return q


def prepare(cfg: SimConfig) -> SolverOps:
    """Assemble operators for cfg and factor the implicit system."""
    n = cfg.trunc.degree
    msig = cfg.sigma_degree
    if msig is None:
        msig = kn.expansion_degree(cfg.pot, n)
    lin = (
        op.assemble_L1(cfg.trunc, cfg.pot, msig=msig).entries
        + op.assemble_L2(cfg.trunc, cfg.pot, msig=msig).entries
    )
    eye = np.eye(cfg.trunc.modes)
    if cfg.scheme == "imex-euler":
        system = eye + cfg.dt * lin
        rhs_mat = None
    else:
        system = eye + 0.5 * cfg.dt * lin
        rhs_mat = eye - 0.5 * cfg.dt * lin
    return SolverOps(
        cfg=cfg,
        lin=lin,
        lu=lu_factor(system),
        rhs_mat=rhs_mat,
        sigma_gram=op.assemble_sigma_gram(cfg.trunc, cfg.pot, msig=msig).entries,
        inv_frame=_invariant_frame(cfg.trunc),
        gamma_rule=op._gamma_rule(cfg.pot, n, n, msig),
        msig=msig,
    )


def _advance(values: np.ndarray, ops: SolverOps) -> tuple[np.ndarray, np.ndarray]:
    """One step from a coefficient vector; returns (next values, Gamma values)."""
    cfg = ops.cfg
    g = CoeffTensor(cfg.trunc, values, copy=False)
    gam = op.apply_gamma(
        g, g, cfg.pot, out_degree=cfg.trunc.degree, rule=ops.gamma_rule, msig=ops.msig
    )
    if ops.rhs_mat is None:
        rhs = values + cfg.dt * gam.values
    else:
        rhs = ops.rhs_mat @ values + cfg.dt * gam.values
    new = lu_solve(ops.lu, rhs)
    new_sq = float(new @ new)
    if not math.isfinite(new_sq):
        raise StepRejected("non-finite state after linear solve")
    if new_sq > 4.0 * float(values @ values):
        raise StepRejected("norm more than doubled in one step")
    return new, gam.values


def step(state: CoeffTensor, cfg: SimConfig, ops: SolverOps) -> CoeffTensor:
    """Advance one IMEX step; raises StepRejected on the instability guard."""
    if not ops.compatible(cfg):
        raise ValueError("operators were prepared for a different configuration")
    if state.degree != cfg.trunc.degree:
        raise ValueError("state degree does not match the configured truncation")
    new, _ = _advance(state.values, ops)
    return CoeffTensor(cfg.trunc, new, copy=False)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Per-step norm records plus periodic coefficient snapshots.

    Rows share an index: times[k] = k dt.  energy_residual[k] for k >= 1
    is the balance residual of the step that arrived at times[k]; entry 0
    is zero by convention.  int_sigma_sq is the trapezoid running integral
    of sigma_sq.  aborted carries the guard message when the run stopped
    early, in which case the arrays cover the completed prefix only.
    """

    config: SimConfig
    times: np.ndarray
    l2_sq: np.ndarray
    sigma_sq: np.ndarray
    int_sigma_sq: np.ndarray
    energy_residual: np.ndarray
    invariant_coords: np.ndarray
    snapshots: tuple
    aborted: str | None = None

    def __post_init__(self):
        t = self.times
        if len(t) < 1 or np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        for arr in (self.l2_sq, self.sigma_sq, self.int_sigma_sq, self.energy_residual):
            if arr.shape != t.shape:
                raise ValueError("per-step arrays must match the time grid")
        if self.invariant_coords.shape[0] != len(t):
            raise ValueError("invariant coordinates must match the time grid")
        for ts, snap in self.snapshots:
            hit = np.flatnonzero(self.times == ts)
            if hit.size:
                ref = self.l2_sq[hit[0]]
                if abs(snap.norm_sq - ref) > 1e-9 * max(1.0, abs(ref)):
                    raise ValueError(f"snapshot at t={ts} disagrees with its summary")

    def save_csv(self, path) -> None:
        """Norm records as CSV; float fields use shortest round-trip form."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "l2_sq", "sigma_sq", "int_sigma_sq", "energy_residual"])
            for k in range(len(self.times)):
                w.writerow(
                    [
                        repr(float(self.times[k])),
                        repr(float(self.l2_sq[k])),
                        repr(float(self.sigma_sq[k])),
                        repr(float(self.int_sigma_sq[k])),
                        repr(float(self.energy_residual[k])),
                    ]
                )

    def invariant_drift(self) -> float:
        """Largest per-step change of the invariant coordinates, relative to |g|."""
        if len(self.times) < 2:
            return 0.0
        jumps = np.linalg.norm(np.diff(self.invariant_coords, axis=0), axis=1)
        scale = np.maximum(np.sqrt(self.l2_sq[:-1]), 1e-300)
        return float(np.max(jumps / scale))

    def summary(self) -> dict:
        return {
            "steps": int(len(self.times) - 1),
            "t_final": float(self.times[-1]),
            "l2_sq_final": float(self.l2_sq[-1]),
            "max_energy_residual": float(np.max(np.abs(self.energy_residual))),
            "invariant_drift": self.invariant_drift(),
            "aborted": self.aborted,
        }


def simulate(g0: CoeffTensor, cfg: SimConfig, ops: SolverOps | None = None) -> Trajectory:
    """Integrate from g0 to t_end, recording norms every step.

    The datum must satisfy |g0| <= epsilon0.  On a guard rejection the
    completed prefix is returned with the reason in `aborted` instead of
    raising, so partial runs still produce inspectable records.
    """
    if ops is None:
        ops = prepare(cfg)
    elif not ops.compatible(cfg):
        raise ValueError("operators were prepared for a different configuration")
    if g0.degree > cfg.trunc.degree:
        raise ValueError("datum exceeds the configured truncation")
    if g0.degree < cfg.trunc.degree:
        g0 = g0.pad_to(cfg.trunc.degree)
    if math.sqrt(g0.norm_sq) > cfg.epsilon0 * (1.0 + 1e-12):
        raise ValueError("datum norm exceeds epsilon0")

    steps = cfg.n_steps
    times = cfg.dt * np.arange(steps + 1)
    l2 = np.zeros(steps + 1)
    sig = np.zeros(steps + 1)
    isig = np.zeros(steps + 1)
    resid = np.zeros(steps + 1)
    coords = np.zeros((steps + 1, ops.inv_frame.shape[1]))
    snaps = []
    aborted = None

    v = g0.values.copy()
    l2[0] = float(v @ v)
    sig[0] = float(v @ (ops.sigma_gram @ v))
    coords[0] = ops.inv_frame.T @ v
    snaps.append((float(times[0]), CoeffTensor(cfg.trunc, v.copy())))

    done = 0
    for k in range(steps):
        try:
            new, gam = _advance(v, ops)
        except StepRejected as err:
            aborted = f"step {k + 1} (t={float(times[k + 1]):g}): {err}"
            break
        l2[k + 1] = float(new @ new)
        sig[k + 1] = float(new @ (ops.sigma_gram @ new))
        isig[k + 1] = isig[k] + 0.5 * cfg.dt * (sig[k] + sig[k + 1])
        resid[k + 1] = (
            (l2[k + 1] - l2[k]) / cfg.dt
            + 2.0 * float(v @ (ops.lin @ v))
            - 2.0 * float(gam @ v)
        )
        coords[k + 1] = ops.inv_frame.T @ new
        v = new
        done = k + 1
        if done % cfg.snapshot_every == 0 or done == steps:
            snaps.append((float(times[done]), CoeffTensor(cfg.trunc, v.copy())))

    end = done + 1
    if aborted is not None and (not snaps or snaps[-1][0] != float(times[done])):
        snaps.append((float(times[done]), CoeffTensor(cfg.trunc, v.copy())))
    return Trajectory(
        config=cfg,
        times=times[:end],
        l2_sq=l2[:end],
        sigma_sq=sig[:end],
        int_sigma_sq=isig[:end],
        energy_residual=resid[:end],
        invariant_coords=coords[:end],
        snapshots=tuple(snaps),
        aborted=aborted,
    )


def reference_heat_flow(
    g0: CoeffTensor, t: float, pot: kn.Potential | None = None
) -> CoeffTensor:
    """Exact oscillator semigroup: coefficients decay by e^{-(|alpha|+3/2) t}.

    Closed form exists only for the Maxwellian exponent; any other
    potential is rejected rather than approximated.
    """
    if pot is not None and pot.gamma != 0.0:
        raise ValueError("closed-form flow requires the gamma = 0 kernel")
    if t < 0:
        raise ValueError("flow is forward in time only")
    orders = hc.ordering(g0.degree).orders
    decay = np.exp(-(orders + 1.5) * t)
    return CoeffTensor(g0.trunc, g0.values * decay, copy=False)


def initial_datum(
    kind: str, trunc: Truncation, epsilon0: float, seed: int = 0
) -> CoeffTensor:
    """Standard starting states, all scaled to |g0| = epsilon0.

    zero       the origin (stays there)
    invariant  random combination of the collision invariants
    mode       a single non-invariant quadratic, (psi_200 - psi_020)/sqrt(2)
    rough      seeded datum with flat level profile, projected off the
               invariants: every level carries the same normalized mass,
               the slowest coefficient decay the truncation can hold
    """
    if kind == "zero":
        return hc.zeros(trunc)
    if kind == "mode":
        v = hc.basis_tensor(trunc, (2, 0, 0)) - hc.basis_tensor(trunc, (0, 2, 0))
        return v * (epsilon0 / math.sqrt(v.norm_sq))
    rng = np.random.default_rng(seed)
    frame = _invariant_frame(trunc)
    if kind == "invariant":
        x = frame @ rng.standard_normal(frame.shape[1])
    elif kind == "rough":
        x = rng.standard_normal(trunc.modes)
        ordo = hc.ordering(trunc.degree)
        for k, sl in enumerate(ordo.level_slices):
            block = x[sl]
            nk = sl.stop - sl.start
            x[sl] = block * (math.sqrt(nk) / np.linalg.norm(block))
        x -= frame @ (frame.T @ x)
    else:
        raise ValueError(f"unknown datum kind {kind!r}")
    return CoeffTensor(trunc, x * (epsilon0 / np.linalg.norm(x)), copy=False)


def gronwall_rate(traj: Trajectory) -> float:
    """Smallest C with |g(t)|^2 + int_0^t sigma^2 <= e^{C t} |g0|^2 on the grid."""
    if traj.l2_sq[0] <= 0:
        raise ValueError("rate undefined for a zero datum")
    t = traj.times[1:]
    ratio = (traj.l2_sq[1:] + traj.int_sigma_sq[1:]) / traj.l2_sq[0]
    if len(t) == 0:
        return 0.0
    return float(np.max(np.log(ratio) / t))
