import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specwave.cli import main
from specwave.config import SCHEMA, RunConfig, load_config, parse_config
from specwave.errors import ConfigurationError, InvariantViolation
from specwave.persistence import RunManifest, read_matrix, write_csv, write_json, write_matrix
from specwave.pipelines import run_pipeline


def test_parse_defaults_and_comments():
    cfg = parse_config("# header\ngrid.n = 200   # nodes\n\nmu = 2.5\npotential.kind = gaussian\n")
    assert cfg["grid.n"] == 200 and cfg["mu"] == 2.5 and cfg["potential.kind"] == "gaussian"
    assert cfg["grid.rmax"] == SCHEMA["grid.rmax"][0]


@pytest.mark.parametrize("text", [
    "grid.n = 10\ngrid.n = 20\n",
    "no.such.key = 1\n",
    "grid.n 100\n",
    "grid.n = many\n",
    "mu = nan\n",
    "mu = -1\n",
    "potential.kind = cubic\n",
])
def test_parse_rejects(text):
    with pytest.raises(ConfigurationError):
        parse_config(text)


def test_overrides_and_roundtrip():
    cfg = RunConfig({}).with_overrides(["grid.n=300", "cutoff.lambda0 = 3"])
    assert cfg["grid.n"] == 300 and cfg["cutoff.lambda0"] == 3.0
    assert parse_config(cfg.to_text()).values == cfg.values
    with pytest.raises(ConfigurationError):
        cfg.with_overrides(["grid.n"])
    with pytest.raises(ConfigurationError):
        load_config("/nonexistent/config.txt")


def test_digest_ignores_output_dir():
    a = RunConfig({"output.dir": "x"})
    b = RunConfig({"output.dir": "y"})
    assert a.digest() == b.digest()
    assert a.digest() != RunConfig({"grid.n": 999}).digest()


@given(st.integers(10, 10**6), st.floats(0.1, 1e4, allow_nan=False))
@settings(max_examples=30, deadline=None)
def test_config_text_roundtrip_property(n, rmax):
    cfg = RunConfig({"grid.n": n, "grid.rmax": rmax})
    back = parse_config(cfg.to_text())
    assert back.values == cfg.values and back.digest() == cfg.digest()


def test_matrix_container_roundtrip(tmp_path):
    A = np.random.default_rng(0).standard_normal((7, 5)) + 1j * np.arange(35).reshape(7, 5)
    path = write_matrix(tmp_path / "a.bin", A, "test")
    assert np.array_equal(read_matrix(path), A)
    meta = json.loads((tmp_path / "a.bin.json").read_text())
    assert meta["shape"] == [7, 5] and meta["order"] == "row-major"
    raw = path.read_bytes()
    assert raw[:8] == b"SPWMAT01" and len(raw) == 24 + 16 * 35
    (tmp_path / "bad.bin").write_bytes(raw[:-16])
    with pytest.raises(ConfigurationError):
        read_matrix(tmp_path / "bad.bin")


def test_json_and_csv(tmp_path):
    write_json(tmp_path / "x.json", {"b": np.float64(1.5), "a": np.arange(3), "c": 2 + 1j})
    d = json.loads((tmp_path / "x.json").read_text())
    assert d["a"] == [0, 1, 2] and d["b"] == 1.5
    write_csv(tmp_path / "x.csv", [{"t": 1.0, "v": 2}, {"t": 2.0, "v": 3}])
    lines = (tmp_path / "x.csv").read_text().splitlines()
    assert lines[0] == "t,v" and len(lines) == 3


def test_manifest_verify(tmp_path):
    man = RunManifest("abc", "demo", str(tmp_path))
    p = write_json(tmp_path / "r.json", {"x": 1})
    man.add(p)
    man.write()
    loaded = RunManifest.load(tmp_path)
    loaded.verify()
    p.write_text("{}")
    with pytest.raises(InvariantViolation):
        loaded.verify()


def _small_free(tmp_path):
    return RunConfig({"grid.n": 400, "grid.rmax": 40.0, "potential.kind": "zero",
                      "cutoff.lambda0": 3.0, "time.samples": 8, "output.dir": str(tmp_path)})


def test_pipeline_reproducible_and_reused(tmp_path):
    cfg = _small_free(tmp_path / "a")
    man1 = run_pipeline(cfg, "free-baseline")
    man2 = run_pipeline(cfg, "free-baseline")
    assert man2.directory == man1.directory and man1.status == "complete"
    other = run_pipeline(_small_free(tmp_path / "b"), "free-baseline")
    # numerical artifacts are byte-identical; config.txt records the output root itself
    strip = lambda a: {k: v for k, v in a.items() if k != "config.txt"}
    assert strip(other.artifacts) == strip(man1.artifacts) and len(man1.artifacts) > 1
    RunManifest.load(man1.directory).verify()


def test_pipeline_unknown(tmp_path):
    with pytest.raises(ConfigurationError):
        run_pipeline(_small_free(tmp_path), "no-such-pipeline")


def test_threshold_atlas_pipeline(tmp_path):
    cfg = RunConfig({"grid.n": 300, "grid.rmax": 30.0, "potential.kind": "gaussian",
                     "potential.tune": "resonance", "output.dir": str(tmp_path)})
    man = run_pipeline(cfg, "threshold-atlas")
    rows = (tmp_path.joinpath(man.directory, "atlas.csv")).read_text().splitlines()
    header = rows[0].split(",")
    col = header.index("classification")
    classes = [r.split(",")[col] for r in rows[1:]]
    assert classes[3] == "ResonanceOnly"
    assert classes[0] == classes[-1] == "Regular"


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["run", "--pipeline", "nope", "--out", str(tmp_path)]) == 2
    assert main(["soliton", "--set", "bogus.key=1", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    # positive ground state impossible for p >= 2: configuration error
    assert main(["soliton", "--set", "potential.p=2", "--set", "grid.n=100",
                 "--set", "grid.rmax=10", "--out", str(tmp_path)]) == 2
    # a failing numerical stage maps to 3
    assert main(["tune", "--set", "potential.kind=gaussian", "--set", "potential.tune=resonance",
                 "--set", "potential.bracket_lo=0.01", "--set", "potential.bracket_hi=0.1",
                 "--set", "grid.n=100", "--set", "grid.rmax=10", "--out", str(tmp_path)]) == 3


def test_cli_soliton_and_osc(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["soliton", "--set", "grid.n=400", "--set", "grid.rmax=20", "--out", str(out)]) == 0
    assert main(["osc", "--suite", "gk", "--out", str(out)]) == 0
    printed = capsys.readouterr().out.split()
    assert any(p.endswith("osc_gk.csv") for p in printed)


def test_cli_config_file(tmp_path):
    cfg = tmp_path / "free.cfg"
    cfg.write_text("grid.n = 400\ngrid.rmax = 40\npotential.kind = zero\ncutoff.lambda0 = 3\n"
                   "time.samples = 8\n")
    assert main(["run", "--pipeline", "free-baseline", "--config", str(cfg),
                 "--out", str(tmp_path / "runs")]) == 0
