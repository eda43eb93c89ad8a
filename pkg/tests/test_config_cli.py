import io
import json
import shutil

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import ROOT
from multiauto import __version__, cli
from multiauto.cli import RunManifest
from multiauto.config import load_config, parse_config
from multiauto.errors import ConfigError

CONFIGS = ROOT / "configs"

BASE = """
[experiment]
kind = aa_test
seed = {seed}
output_dir = out/x

[function]
source = catalogue:two_tone

[probe]
window_lo = {lo!r}
window_hi = {hi!r}
depth = {depth}
tol_limit = {tol!r}
tol_subseq = {tol!r}
positive = {pos}
"""

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@given(st.integers(0, 2 ** 64 - 1), finite, finite, st.integers(8, 4096),
       st.floats(1e-12, 1.0), st.booleans())
def test_canonical_text_round_trip(seed, lo, hi, depth, tol, pos):
    text = BASE.format(seed=seed, lo=lo, hi=hi, depth=depth, tol=tol, pos=str(pos).lower())
    cfg = parse_config(text)
    again = parse_config(cfg.to_text())
    assert again == cfg
    assert again.digest() == cfg.digest()
    assert again.to_text() == cfg.to_text()


def test_matrix_values_round_trip():
    text = """
[experiment]
kind = memory

[memory]
dim = 2
A = -2, 1; 1, -2
profile = 0.5, 1
t_max = 10
dt = 0.01
"""
    cfg = parse_config(text)
    assert cfg.section("memory")["A"] == ((-2.0, 1.0), (1.0, -2.0))
    assert parse_config(cfg.to_text()) == cfg
    lap = parse_config(text.replace("-2, 1; 1, -2", "laplacian1d(2, 0.5)"))
    assert lap.section("memory")["A"] == ("laplacian1d", 2, 0.5)
    assert parse_config(lap.to_text()) == lap


@pytest.mark.parametrize("text,match", [
    ("[experiment]\nkind = aa_test\n[function]\nsource = catalogue:two_tone\n[bogus]\nx = 1\n",
     "unknown section"),
    ("[experiment]\nkind = aa_test\n[function]\nsource = catalogue:two_tone\nfoo = 1\n", "unknown key"),
    ("[experiment]\nkind = aa_test\n", "requires section"),
    ("[experiment]\nkind = teleport\n", "bad value"),
    ("[experiment]\nkind = aa_test\n[function]\nsource = catalogue:two_tone\nexpr = t0\n", "exactly one"),
    ("[experiment]\nkind = aa_test\n[function]\nsource = catalogue:two_tone\n[heat]\ntime = 1\n",
     "not used"),
    ("[experiment]\nkind = aa_test\nseed = -1\n[function]\nsource = catalogue:two_tone\n", "64-bit"),
    ("kind = aa_test\n", "malformed"),
])
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.cfg")


def test_output_dir_resolves_against_config(tmp_path):
    cfg = parse_config(BASE.format(seed=1, lo=-5.0, hi=5.0, depth=64, tol=0.01, pos="false"),
                       tmp_path / "a.cfg")
    assert cfg.output_dir() == tmp_path / "out" / "x"


# command line

def _copy(tmp_path, name):
    (tmp_path / "configs").mkdir(exist_ok=True)
    dst = tmp_path / "configs" / name
    shutil.copy(CONFIGS / name, dst)
    return dst


def _run(path):
    out, err = io.StringIO(), io.StringIO()
    code = cli.run(path, out, err)
    return code, out.getvalue(), err.getvalue()


def test_run_pass_writes_manifest(tmp_path):
    code, out, _ = _run(_copy(tmp_path, "aa_two_tone.cfg"))
    assert code == 0 and out.startswith("PASS aa_test")
    out_dir = tmp_path / "out" / "aa_two_tone"
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["verdict"] == "pass" and manifest["version"] == __version__
    m = RunManifest(**manifest)
    assert m.verify(out_dir) == []
    verdict = json.loads((out_dir / "verdict.json").read_text())
    assert verdict
    (out_dir / "verdict.json").write_text("{}")
    assert m.verify(out_dir) == ["verdict.json"]


def test_expected_failure_counts_as_success(tmp_path):
    code, out, _ = _run(_copy(tmp_path, "aa_step_fails.cfg"))
    assert code == 0


def test_unexpected_failure_exits_one(tmp_path):
    src = (CONFIGS / "aa_step_fails.cfg").read_text().replace("expect = fail", "expect = pass")
    path = tmp_path / "configs" / "step_pass.cfg"
    path.parent.mkdir()
    path.write_text(src)
    code, out, _ = _run(path)
    assert code == 1 and out.startswith("FAIL")


def test_bad_config_exits_two_and_writes_nothing(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[experiment]\nkind = aa_test\noutput_dir = out\n[function]\nsource = catalogue:two_tone\n"
                    "[probe]\ndepth = many\n")
    code, _, err = _run(path)
    assert code == 2 and err.startswith("ConfigError")
    assert not (tmp_path / "out").exists()


def test_bad_thread_count_exits_two(tmp_path, monkeypatch):
    monkeypatch.setenv("MULTIAUTO_THREADS", "zero")
    code, _, err = _run(_copy(tmp_path, "aa_two_tone.cfg"))
    assert code == 2 and "MULTIAUTO_THREADS" in err


def test_invalid_certificate_exits_three(tmp_path):
    code, _, err = _run(_copy(tmp_path, "vie_theta_invalid.cfg"))
    assert code == 3
    assert err.startswith("CertificateInvalid: theta=3")
    assert not (tmp_path / "out").exists()


def test_main_subcommands(capsys):
    assert cli.main(["version"]) == 0
    assert capsys.readouterr().out.strip() == __version__
    assert cli.main(["catalogue", "kernel"]) == 0
    listing = capsys.readouterr().out
    assert "kernel_laplace_2d" in listing and "two_tone" not in listing
    assert cli.main(["frobnicate"]) == 2
    assert cli.main([]) == 2
