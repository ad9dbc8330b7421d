"""Command line entry point: assemble, verify, simulate, and fit workflows.

Configuration is a flat key=value text file; blank lines and lines starting
with # are ignored, every other line must be `key = value` with a known
key, and unknown or malformed lines are errors naming the offending line
(fail closed, so typos cannot silently fall back to defaults).  The
--seed flag overrides the configured seed without editing the file.

Every run writes its products into --out-dir plus a manifest.json listing
each emitted file with its content hash, the configuration hash, and the
seed.  All report and table outputs are byte-deterministic for a fixed
configuration and seed; the manifest carries a wall-clock timestamp and
is the one file excluded from that guarantee.

Assembled operator matrices are cached under $LANDAU_HERMITE_CACHE (the
same directory the kernel tables use) keyed by their parameters; a cache
file that fails to load is rebuilt with a warning rather than trusted.

Exit codes: 0 success, 1 usage or configuration error, 2 a verification
report recorded violations, 3 numerical failure (aborted run).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import diagnostics as dg
from . import hermite_core as hc
from . import inequalities as iq
from . import kernel as kn
from . import operators as op
from . import solver as sv
from .hermite_core import Truncation

__all__ = ["ConfigError", "parse_config", "config_hash", "main"]


class ConfigError(Exception):
    """Bad usage or configuration; maps to exit code 1."""


def _parse_optint(text: str):
    return None if text == "auto" else int(text)


# key -> (parser, default); values are scalars so configs hash canonically
_CONFIG_KEYS = {
    "gamma": (float, 0.0),
    "N": (int, 8),
    "dt": (float, 1e-3),
    "t_end": (float, 0.1),
    "epsilon0": (float, 1e-3),
    "seed": (int, 0),
    "scheme": (str, "imex-euler"),
    "datum": (str, "rough"),
    "snapshot_every": (int, 10),
    "quadrature.degree": (_parse_optint, None),
    "suites": (str, "all"),
    "m": (int, 1),
    "m_max": (int, 0),
    "samples": (int, 0),
    "floor": (float, 1e-2),
}

_SUITES = ("ladder", "norms", "leibniz", "coercivity", "trilinear")


def parse_config(path=None) -> dict:
    """Read a key=value config file; None gives pure defaults."""
    conf = {k: d for k, (_, d) in _CONFIG_KEYS.items()}
    if path is None:
        return conf
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        caster = _CONFIG_KEYS[key][0]
        try:
            conf[key] = caster(value)
        except ValueError:
            raise ConfigError(
                f"{path}:{lineno}: bad value {value!r} for {key!r}"
            ) from None
    return conf


def config_hash(conf: dict) -> str:
    blob = "\n".join(f"{k}={conf[k]!r}" for k in sorted(conf))
    return hashlib.sha256(blob.encode()).hexdigest()


class RunManifest:
    """Record of one run: config identity, seed, and every emitted file."""

    def __init__(self, command: str, conf: dict, out_dir: Path):
        self.command = command
        self.conf = conf
        self.out_dir = out_dir
        self.outputs = []
        self.cache_keys = []

    def add(self, path: Path) -> None:
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.outputs.append({"path": path.name, "sha256": digest})

    def save(self) -> Path:
        payload = {
            "command": self.command,
            "version": __version__,
            "created_unix": time.time(),
            "config_hash": config_hash(self.conf),
            "config": {k: self.conf[k] for k in sorted(self.conf)},
            "seed": self.conf["seed"],
            "cache_keys": sorted(self.cache_keys),
            "outputs": sorted(self.outputs, key=lambda o: o["path"]),
        }
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
        return path


def _out_dir(arg: str) -> Path:
    path = Path(arg)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _operator_cached(kind: str, trunc: Truncation, pot: kn.Potential, msig: int):
    """Assemble L1/L2, going through the on-disk cache when enabled."""
    key = hashlib.sha256(
        f"op-{kind}|gamma={pot.gamma!r}|N={trunc.degree}|msig={msig}|"
        f"{hc.ORDERING_TAG}".encode()
    ).hexdigest()[:16]
    root = kn.cache_dir()
    path = root / f"op_{kind}_{key}.npz" if root is not None else None
    if path is not None and path.exists():
        try:
            cached = op.GalerkinOperator.load(path)
            if cached.trunc.degree == trunc.degree and cached.tag == kind:
                return cached, key
            raise ValueError("parameter mismatch")
        except Exception as err:
            print(f"warning: rebuilding stale cache {path.name}: {err}", file=sys.stderr)
    built = (op.assemble_L1 if kind == "L1" else op.assemble_L2)(trunc, pot, msig=msig)
    if path is not None:
        root.mkdir(parents=True, exist_ok=True)
        built.save(path)
    return built, key


def _pot_trunc(conf: dict):
    try:
        pot = kn.Potential(conf["gamma"])
        trunc = Truncation(conf["N"])
    except ValueError as err:
        raise ConfigError(str(err)) from None
    if conf["N"] < 2:
        raise ConfigError("N must be at least 2")
    return pot, trunc


def _msig(conf: dict, pot: kn.Potential, degree: int) -> int:
    override = conf["quadrature.degree"]
    return override if override is not None else kn.expansion_degree(pot, degree)


def cmd_assemble(conf: dict, out_dir: Path) -> int:
    pot, trunc = _pot_trunc(conf)
    msig = _msig(conf, pot, trunc.degree)
    manifest = RunManifest("assemble", conf, out_dir)
    info = {"gamma": pot.gamma, "N": trunc.degree, "sigma_degree": msig}
    code = 0
    for kind in ("L1", "L2"):
        built, key = _operator_cached(kind, trunc, pot, msig)
        manifest.cache_keys.append(f"{kind}:{key}")
        dest = out_dir / f"{kind}.npz"
        built.save(dest)
        manifest.add(dest)
        sym = float(np.max(np.abs(built.entries - built.entries.T)))
        info[f"symmetry_residual_{kind.lower()}"] = sym
        print(f"{kind}: assembled {built.trunc.modes} modes, symmetry residual {sym:.3e}")
        if kind == "L1" and pot.gamma == 0.0:
            oracle = op.closed_form_L1_gamma0(trunc)
            gap = float(np.max(np.abs(built.entries - oracle.entries)))
            info["oracle_residual"] = gap
            print(f"L1: closed-form oracle residual {gap:.3e}")
            if gap > 1e-8:
                code = 2
    report = out_dir / "assemble.json"
    report.write_text(json.dumps(info, sort_keys=True, indent=2) + "\n")
    manifest.add(report)
    manifest.save()
    return code


def _norms_report(conf: dict, pot: kn.Potential, trunc: Truncation) -> iq.EstimateReport:
    """sigma-norm consistency: independent sigma sources and route gaps."""
    seed = conf["seed"]
    samples = conf["samples"] or 8
    degree = min(trunc.degree, 6)
    msig = _msig(conf, pot, degree + 1)
    rng = np.random.default_rng(seed)
    tol = 1e-8
    details = []
    bad = 0
    worst = 0.0
    for _ in range(samples):
        g = iq.random_tensor(degree, rng)
        first = op.sigma_norm_sq(g, pot, sigma_source="expansion", msig=msig)
        if pot.gamma == 0.0:
            # exact closed-form kernel against its Hermite expansion
            second = op.sigma_norm_sq(g, pot, sigma_source="profile")
        else:
            second = op.sigma_norm_sq(g, pot, sigma_source="expansion", msig=msig + 4)
        rel = abs(first.sigma_norm_sq - second.sigma_norm_sq) / first.sigma_norm_sq
        route = abs(first.route_gap) / first.sigma_norm_sq
        worst = max(worst, rel, route)
        if rel > tol or route > tol:
            bad += 1
        details.append(
            {"source_gap": rel, "route_gap": route, "value": first.sigma_norm_sq}
        )
    return iq.EstimateReport(
        name="norms",
        samples=samples,
        violations=bad,
        tolerance=tol,
        seed=seed,
        max_ratio=None,
        max_residual=worst,
        details=tuple(details),
    )


def _verify_reports(conf: dict, names, pot, trunc):
    seed = conf["seed"]
    for name in names:
        if name == "ladder":
            yield iq.verify_ladder_bounds(conf["samples"] or 2000, seed=seed)
        elif name == "norms":
            yield _norms_report(conf, pot, trunc)
        elif name == "leibniz":
            m = conf["m"]
            inner = trunc.degree - m - 1
            if inner < 1:
                raise ConfigError(f"N too small for leibniz at m={m}")
            rng = np.random.default_rng(seed)
            f = iq.random_tensor(inner, rng)
            g = iq.random_tensor(inner, rng)
            yield iq.verify_leibniz(m, f, g, pot, trunc=trunc)
        elif name == "coercivity":
            rng = np.random.default_rng(seed + 1)
            g = iq.random_tensor(min(trunc.degree, 5), rng)
            yield iq.verify_coercivity(conf["m"], g, pot)
        elif name == "trilinear":
            samples = conf["samples"] or 40
            yield iq.estimate_trilinear(samples, pot, trunc, seed=seed)
            m = conf["m"]
            if trunc.degree - m - 1 >= 1:
                yield iq.estimate_trilinear_grad(m, samples, pot, trunc, seed=seed)
        else:
            raise ConfigError(f"unknown suite {name!r}")


def cmd_verify(conf: dict, suite: str | None, out_dir: Path) -> int:
    pot, trunc = _pot_trunc(conf)
    chosen = suite if suite is not None else conf["suites"]
    names = _SUITES if chosen == "all" else tuple(s.strip() for s in chosen.split(","))
    manifest = RunManifest("verify", conf, out_dir)
    bad = 0
    for report in _verify_reports(conf, names, pot, trunc):
        dest = out_dir / f"{report.name}.json"
        report.save(dest)
        manifest.add(dest)
        state = "pass" if report.passed else "FAIL"
        print(
            f"{report.name}: {state} "
            f"(samples={report.samples}, violations={report.violations})"
        )
        bad += report.violations
    manifest.save()
    return 2 if bad else 0


def cmd_simulate(conf: dict, out_dir: Path) -> int:
    pot, trunc = _pot_trunc(conf)
    try:
        scfg = sv.SimConfig(
            pot=pot,
            trunc=trunc,
            dt=conf["dt"],
            t_end=conf["t_end"],
            scheme=conf["scheme"],
            epsilon0=conf["epsilon0"],
            seed=conf["seed"],
            sigma_degree=conf["quadrature.degree"],
            snapshot_every=conf["snapshot_every"],
        )
        g0 = sv.initial_datum(conf["datum"], trunc, conf["epsilon0"], conf["seed"])
    except ValueError as err:
        raise ConfigError(str(err)) from None
    traj = sv.simulate(g0, scfg)
    manifest = RunManifest("simulate", conf, out_dir)

    table = out_dir / "trajectory.csv"
    traj.save_csv(table)
    manifest.add(table)
    index = out_dir / "snapshots.csv"
    with open(index, "w", newline="") as fh:
        fh.write("index,t,file\n")
        for k, (t, snap) in enumerate(traj.snapshots):
            name = f"snapshot_{k:04d}.npz"
            hc.save_tensor(out_dir / name, snap)
            manifest.add(out_dir / name)
            fh.write(f"{k},{float(t)!r},{name}\n")
    manifest.add(index)
    summary = out_dir / "summary.json"
    summary.write_text(json.dumps(traj.summary(), sort_keys=True, indent=2) + "\n")
    manifest.add(summary)
    manifest.save()

    info = traj.summary()
    print(
        f"simulate: {info['steps']} steps to t={info['t_final']:g}, "
        f"|g|^2 = {info['l2_sq_final']:.6e}, "
        f"max energy residual {info['max_energy_residual']:.3e}"
    )
    if traj.aborted:
        print(f"simulate: aborted: {traj.aborted}", file=sys.stderr)
        return 3
    return 0


def _load_snapshots(traj_dir: Path):
    index = traj_dir / "snapshots.csv"
    if not index.exists():
        raise ConfigError(f"no snapshots.csv in {traj_dir}")
    items = []
    for line in index.read_text().splitlines()[1:]:
        if not line.strip():
            continue
        _, t, name = line.split(",")
        items.append((float(t), hc.load_tensor(traj_dir / name)))
    if not items:
        raise ConfigError(f"{index} lists no snapshots")
    return items


def cmd_fit(conf: dict, traj_dir: Path, out_dir: Path) -> int:
    items = _load_snapshots(traj_dir)
    manifest = RunManifest("fit", conf, out_dir)
    # m_max = 0 sizes automatically from the snapshot truncation
    m_max = conf["m_max"] or min(4, items[0][1].degree // 2)
    try:
        radius = dg.check_radius_growth(items, floor=conf["floor"])
        mfact = dg.check_mfactorial_bound(items, m_max=m_max)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    written = []
    for report, csv_writer, stem in (
        (radius, dg.radius_csv, "radius"),
        (mfact, dg.mfactorial_csv, "mfactorial"),
    ):
        table = out_dir / f"{stem}.csv"
        csv_writer(report, table)
        report.save(out_dir / f"{stem}.json")
        manifest.add(table)
        manifest.add(out_dir / f"{stem}.json")
        written.append(report)
        state = "pass" if report.passed else "FAIL"
        print(f"{report.name}: {state} (samples={report.samples})")
    manifest.save()
    return 2 if any(r.violations for r in written) else 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems map to exit 1, not argparse's 2
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="landau-hermite", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("assemble", "verify", "simulate", "fit"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out-dir", default=".", help="output directory")
        if name == "verify":
            p.add_argument("--suite", default=None, help="comma list or 'all'")
        if name == "fit":
            p.add_argument("traj_dir", help="directory of a simulate run")
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        conf = parse_config(args.config)
        if args.seed is not None:
            conf["seed"] = args.seed
        out = _out_dir(args.out_dir)
        if args.command == "assemble":
            return cmd_assemble(conf, out)
        if args.command == "verify":
            return cmd_verify(conf, args.suite, out)
        if args.command == "simulate":
            return cmd_simulate(conf, out)
        return cmd_fit(conf, Path(args.traj_dir), out)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (sv.StepRejected, np.linalg.LinAlgError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
