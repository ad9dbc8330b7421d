"""Smoothing diagnostics from coefficient decay.

Level norms are the observable: |P_k g| over energy levels k, divided by
sqrt(n_k) with n_k the level dimension so a pure exponential profile in
the level fits exactly.  The radius fit regresses the log of that
normalized norm on -sqrt(k + 3/2) by ordinary least squares, giving the
decay exponent c (the analyticity radius proxy) and an offset.  Levels
below a relative noise floor are excluded; anything that leaves fewer
than four levels is rejected rather than fitted.

Both trajectory checks consume either full coefficient snapshots or bare
level-norm vectors.  The second form matters because the fit window is
floor-limited only when the state carries level content out to
k ~ log(1/floor)/t, far beyond buildable tensors at small t; the exact
comparator flow scales each level norm by e^{-(k+3/2)t}, so its level
profile is available analytically at any depth.

The derivative-growth check turns the smoothing statement into measured
numbers: b_m(t) = min(t,1)^{m/2} |grad^m g(t)| and r_m = (b_m/m!)^{1/(m+1)},
computed in the log domain so deep levels cannot overflow.  Finite,
refinement-stable r_m is the observable stand-in for the factorial
derivative bound's constant.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import hermite_core as hc
from .hermite_core import CoeffTensor
from .inequalities import EstimateReport

__all__ = [
    "DecayFit",
    "fit_gs_radius",
    "check_radius_growth",
    "check_mfactorial_bound",
    "radius_csv",
    "mfactorial_csv",
]


@dataclass(frozen=True)
class DecayFit:
    """One radius fit: log(|P_k g| / sqrt(n_k)) ~ a - c sqrt(k + 3/2)."""

    t: float
    c: float
    a: float
    rms_residual: float
    k_range: tuple[int, int]


def _level_profile(g) -> np.ndarray:
    """Normalized level norms |P_k g|/sqrt(n_k) from a tensor or a norm vector."""
    if isinstance(g, CoeffTensor):
        lev = hc.level_norms(g)
    else:
        lev = np.asarray(g, dtype=float)
        if lev.ndim != 1 or np.any(lev < 0):
            raise ValueError("level norms must be a 1-d nonnegative array")
    k = np.arange(len(lev))
    return lev / np.sqrt((k + 1) * (k + 2) / 2.0)


def fit_gs_radius(g, floor: float = 1e-13, t: float = 0.0) -> DecayFit:
    """Least-squares decay exponent of the level profile.

    g is a CoeffTensor or a vector of per-level norms |P_k g|.  floor is
    relative to the largest normalized level norm; levels at or below it
    are excluded.  Needs at least four usable levels.
    """
    prof = _level_profile(g)
    top = prof.max() if len(prof) else 0.0
    if top <= 0.0:
        raise ValueError("state has no level content to fit")
    use = np.flatnonzero(prof > floor * top)
    if len(use) < 4:
        raise ValueError(f"need at least 4 levels above the floor, have {len(use)}")
    x = np.sqrt(use + 1.5)
    y = np.log(prof[use])
    design = np.column_stack([np.ones(len(use)), -x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return DecayFit(
        t=float(t),
        c=float(coef[1]),
        a=float(coef[0]),
        rms_residual=float(np.sqrt(np.mean(resid * resid))),
        k_range=(int(use[0]), int(use[-1])),
    )


def _snapshot_items(traj):
    snaps = getattr(traj, "snapshots", traj)
    return [(float(t), g) for t, g in snaps]


def check_radius_growth(
    traj,
    floor: float = 1e-2,
    t_min: float = 0.01,
    t_max: float = 1.0,
    tolerance: float = 2.0,
) -> EstimateReport:
    """Radius growth law over a trajectory's snapshots.

    Fits c(t) per snapshot in [t_min, t_max] and reports the spread of
    c(t)/sqrt(t); a spread beyond `tolerance` counts as a violation.  The
    t > 0 restriction is structural: the square-root comparison has no
    meaning at the datum itself.  The coarse floor keeps the fit in the
    floor-limited window where the growth law is the dominant signal.
    """
    items = [(t, g) for t, g in _snapshot_items(traj) if t_min <= t <= t_max]
    if len(items) < 2:
        raise ValueError("need at least two snapshots inside the fit window")
    details = []
    ratios = []
    for t, g in items:
        fit = fit_gs_radius(g, floor=floor, t=t)
        ratios.append(fit.c / math.sqrt(t))
        details.append(
            {
                "t": t,
                "c": fit.c,
                "a": fit.a,
                "rms_residual": fit.rms_residual,
                "c_over_sqrt_t": ratios[-1],
                "k_lo": fit.k_range[0],
                "k_hi": fit.k_range[1],
            }
        )
    band = max(ratios) / min(ratios) if min(ratios) > 0 else math.inf
    return EstimateReport(
        name="radius-growth",
        samples=len(items),
        violations=int(not band <= tolerance),
        tolerance=tolerance,
        seed=None,
        max_ratio=band,
        max_residual=max(d["rms_residual"] for d in details),
        details=tuple(details),
    )


def check_mfactorial_bound(traj, m_max: int) -> EstimateReport:
    """Measured factorial derivative-growth constant over a trajectory.

    For each snapshot and each m <= m_max reports
    b_m = min(t,1)^{m/2} |grad^m g| and r_m = (b_m/m!)^{1/(m+1)}.  The
    violation count is the number of non-finite r_m; the maximum r_m is
    the measured constant.  m_max must leave an interior margin in the
    truncation.
    """
    items = _snapshot_items(traj)
    if not items:
        raise ValueError("trajectory has no snapshots")
    for _, g in items:
        if not isinstance(g, CoeffTensor):
            raise ValueError("derivative growth needs full coefficient snapshots")
        if m_max > g.degree // 2:
            raise ValueError("m_max exceeds the interior margin of the truncation")
    details = []
    bad = 0
    worst = 0.0
    for t, g in items:
        tt = min(t, 1.0)
        for m in range(m_max + 1):
            logw = hc.grad_hplus_norm_log(g, m)
            if logw == -math.inf:
                bm = 0.0
                rm = 0.0
            else:
                if m == 0:
                    logb = 0.5 * logw
                elif tt > 0:
                    logb = 0.5 * m * math.log(tt) + 0.5 * logw
                else:
                    logb = -math.inf
                bm = math.exp(logb)
                rm = math.exp((logb - math.lgamma(m + 1)) / (m + 1))
            if not (math.isfinite(bm) and math.isfinite(rm)):
                bad += 1
            else:
                worst = max(worst, rm)
            details.append({"t": t, "m": m, "b_m": bm, "r_m": rm})
    return EstimateReport(
        name="mfactorial",
        samples=len(items),
        violations=bad,
        tolerance=None,
        seed=None,
        max_ratio=worst,
        max_residual=None,
        details=tuple(details),
    )


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) for x in row])


def radius_csv(report: EstimateReport, path) -> None:
    if report.name != "radius-growth":
        raise ValueError("expected a radius-growth report")
    _write_rows(
        path,
        ["t", "c", "residual"],
        [(d["t"], d["c"], d["rms_residual"]) for d in report.details],
    )


def mfactorial_csv(report: EstimateReport, path) -> None:
    if report.name != "mfactorial":
        raise ValueError("expected an mfactorial report")
    _write_rows(
        path,
        ["t", "m", "b_m", "r_m"],
        [(d["t"], d["m"], d["b_m"], d["r_m"]) for d in report.details],
    )
