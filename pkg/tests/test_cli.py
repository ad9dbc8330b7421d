"""Command line workflows: config parsing, exit codes, outputs, manifests."""

import json
import subprocess
import sys

import numpy as np
import pytest

from landau_hermite import cli
from landau_hermite import operators as op


def write_config(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return str(path)


def test_parse_config_defaults_and_values(tmp_path):
    conf = cli.parse_config(None)
    assert conf["N"] == 8 and conf["gamma"] == 0.0 and conf["scheme"] == "imex-euler"
    path = write_config(
        tmp_path,
        "# comment\n\ngamma = 1.5\nN = 6\nquadrature.degree = auto\nseed = 3\n",
    )
    conf = cli.parse_config(path)
    assert conf["gamma"] == 1.5 and conf["N"] == 6 and conf["seed"] == 3
    assert conf["quadrature.degree"] is None
    assert conf["dt"] == 1e-3  # untouched default


def test_parse_config_fails_closed(tmp_path):
    bad = [
        ("N = 6\nwidth = 3\n", "unknown key"),
        ("N 6\n", "expected key = value"),
        ("N = 6\nN = 7\n", "duplicate"),
        ("N = six\n", "bad value"),
    ]
    for text, needle in bad:
        with pytest.raises(cli.ConfigError) as err:
            cli.parse_config(write_config(tmp_path, text))
        assert needle in str(err.value)
        assert ":2:" in str(err.value) or ":1:" in str(err.value)
    with pytest.raises(cli.ConfigError):
        cli.parse_config(tmp_path / "missing.cfg")


def test_config_hash_tracks_content():
    a = cli.parse_config(None)
    b = dict(a, seed=1)
    assert cli.config_hash(a) == cli.config_hash(dict(a))
    assert cli.config_hash(a) != cli.config_hash(b)


def test_assemble_outputs_and_oracle(tmp_path, capsys):
    conf = write_config(tmp_path, "N = 6\n")
    out = tmp_path / "out"
    code = cli.main(["assemble", "--config", conf, "--out-dir", str(out)])
    assert code == 0
    said = capsys.readouterr().out
    assert "oracle residual" in said
    info = json.loads((out / "assemble.json").read_text())
    assert info["oracle_residual"] < 1e-8
    assert info["N"] == 6
    manifest = json.loads((out / "manifest.json").read_text())
    files = {o["path"] for o in manifest["outputs"]}
    on_disk = {p.name for p in out.iterdir()} - {"manifest.json"}
    assert files == on_disk == {"L1.npz", "L2.npz", "assemble.json"}
    assert manifest["command"] == "assemble"
    assert manifest["config_hash"] == cli.config_hash(cli.parse_config(conf))
    back = op.GalerkinOperator.load(out / "L1.npz")
    assert back.trunc.degree == 6


def test_assemble_operator_cache(tmp_path, monkeypatch, capsys):
    cache = tmp_path / "cache"
    monkeypatch.setenv("LANDAU_HERMITE_CACHE", str(cache))
    conf = write_config(tmp_path, "N = 4\n")
    assert cli.main(["assemble", "--config", conf, "--out-dir", str(tmp_path / "a")]) == 0
    cached = sorted(p.name for p in cache.iterdir() if p.name.startswith("op_"))
    assert len(cached) == 2
    keys_first = json.loads((tmp_path / "a" / "manifest.json").read_text())["cache_keys"]
    assert cli.main(["assemble", "--config", conf, "--out-dir", str(tmp_path / "b")]) == 0
    keys_second = json.loads((tmp_path / "b" / "manifest.json").read_text())["cache_keys"]
    assert keys_first == keys_second
    assert (tmp_path / "a" / "L1.npz").read_bytes() == (tmp_path / "b" / "L1.npz").read_bytes()
    # corrupted cache entries are rebuilt, not trusted
    victim = cache / cached[0]
    victim.write_bytes(b"not a matrix")
    capsys.readouterr()
    assert cli.main(["assemble", "--config", conf, "--out-dir", str(tmp_path / "c")]) == 0
    assert "rebuilding stale cache" in capsys.readouterr().err


def test_verify_suite_selection_and_determinism(tmp_path):
    conf = write_config(tmp_path, "N = 6\nsamples = 20\n")
    out1, out2 = tmp_path / "v1", tmp_path / "v2"
    code = cli.main(
        ["verify", "--config", conf, "--suite", "ladder,trilinear", "--out-dir", str(out1)]
    )
    assert code == 0
    assert cli.main(
        ["verify", "--config", conf, "--suite", "ladder,trilinear", "--out-dir", str(out2)]
    ) == 0
    for name in ("ladder-bounds.json", "trilinear.json", "trilinear-grad.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    rep = json.loads((out1 / "trilinear.json").read_text())
    assert rep["seed"] == 0 and rep["samples"] == 20


def test_verify_seed_flag_overrides(tmp_path):
    conf = write_config(tmp_path, "N = 6\nsamples = 10\n")
    out = tmp_path / "v"
    assert cli.main(
        ["verify", "--config", conf, "--suite", "trilinear", "--seed", "9",
         "--out-dir", str(out)]
    ) == 0
    assert json.loads((out / "trilinear.json").read_text())["seed"] == 9


def test_verify_norms_and_identity_suites(tmp_path):
    conf = write_config(tmp_path, "N = 5\nm = 1\nsamples = 4\n")
    out = tmp_path / "v"
    code = cli.main(
        ["verify", "--config", conf, "--suite", "norms,leibniz,coercivity",
         "--out-dir", str(out)]
    )
    assert code == 0
    for name in ("norms.json", "leibniz.json", "coercivity.json"):
        rep = json.loads((out / name).read_text())
        assert rep["violations"] == 0


def test_verify_unknown_suite_is_usage_error(tmp_path, capsys):
    assert cli.main(["verify", "--suite", "nosuch", "--out-dir", str(tmp_path)]) == 1
    assert "unknown suite" in capsys.readouterr().err


def test_usage_errors_exit_one(tmp_path, capsys):
    assert cli.main([]) == 1
    assert cli.main(["simulate", "--bogus"]) == 1
    capsys.readouterr()


def test_simulate_zero_datum(tmp_path):
    conf = write_config(tmp_path, "N = 4\ndatum = zero\nt_end = 0.01\n")
    out = tmp_path / "run"
    assert cli.main(["simulate", "--config", conf, "--out-dir", str(out)]) == 0
    rows = (out / "trajectory.csv").read_text().splitlines()[1:]
    assert len(rows) == 11
    assert all(float(r.split(",")[1]) == 0.0 for r in rows)


def test_simulate_invariant_datum_stationary(tmp_path):
    conf = write_config(tmp_path, "N = 5\ndatum = invariant\nt_end = 0.02\n")
    out = tmp_path / "run"
    assert cli.main(["simulate", "--config", conf, "--out-dir", str(out)]) == 0
    rows = (out / "trajectory.csv").read_text().splitlines()[1:]
    first, last = float(rows[0].split(",")[1]), float(rows[-1].split(",")[1])
    assert abs(last - first) < 1e-10
    manifest = json.loads((out / "manifest.json").read_text())
    listed = {o["path"] for o in manifest["outputs"]}
    assert {p.name for p in out.iterdir()} - {"manifest.json"} == listed


def test_simulate_abort_exits_three(tmp_path, capsys):
    conf = write_config(
        tmp_path, "N = 5\ndt = 0.1\nt_end = 2.0\nepsilon0 = 1e4\ndatum = rough\nseed = 2\n"
    )
    out = tmp_path / "run"
    assert cli.main(["simulate", "--config", conf, "--out-dir", str(out)]) == 3
    assert "aborted" in capsys.readouterr().err
    summary = json.loads((out / "summary.json").read_text())
    assert summary["aborted"] is not None
    assert (out / "manifest.json").exists()


def test_fit_from_simulation(tmp_path):
    conf = write_config(tmp_path, "N = 6\nt_end = 0.1\nseed = 5\n")
    run = tmp_path / "run"
    fit = tmp_path / "fit"
    assert cli.main(["simulate", "--config", conf, "--out-dir", str(run)]) == 0
    code = cli.main(["fit", str(run), "--config", conf, "--out-dir", str(fit)])
    assert code in (0, 2)
    for name in ("radius.csv", "radius.json", "mfactorial.csv", "mfactorial.json"):
        assert (fit / name).exists()
    mf = json.loads((fit / "mfactorial.json").read_text())
    assert mf["violations"] == 0
    assert all(np.isfinite(d["r_m"]) for d in mf["details"])


def test_fit_rejects_unusable_trajectories(tmp_path, capsys):
    assert cli.main(["fit", str(tmp_path / "nowhere"), "--out-dir", str(tmp_path)]) == 1
    empty = tmp_path / "empty"
    empty.mkdir()
    (empty / "snapshots.csv").write_text("index,t,file\n")
    assert cli.main(["fit", str(empty), "--out-dir", str(tmp_path)]) == 1
    # too few snapshots inside the fit window
    conf = write_config(tmp_path, "N = 5\nt_end = 0.02\nsnapshot_every = 500\n")
    run = tmp_path / "short"
    assert cli.main(["simulate", "--config", conf, "--out-dir", str(run)]) == 0
    assert cli.main(["fit", str(run), "--out-dir", str(tmp_path / "f")]) == 1
    capsys.readouterr()


def test_module_invocation_subprocess(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "landau_hermite.cli", "verify", "--suite", "ladder",
         "--out-dir", str(tmp_path)],
        capture_output=True,
        text=True,
        timeout=300,
    )
    assert proc.returncode == 0
    assert "ladder-bounds: pass" in proc.stdout
