import json
import textwrap

import numpy as np
import pytest

from nonlocal_fv.cli import dump_config, load_config, parse_config
from nonlocal_fv.cli.main import main
from nonlocal_fv.cli.outputs import read_snapshot, read_table, write_diagnostics, write_snapshot
from nonlocal_fv.errors import ConfigError
from nonlocal_fv.field import SpeciesState
from nonlocal_fv.grid import build_grid_1d, build_grid_2d

from conftest import CONFIGS

SMALL = """\
name: tiny
mode: transient
grid: {dim: 1, L: 1.0, N: 16}
time: {dt: 0.01, t_end: 0.05, snapshot_stride: 2}
species:
  - valence: 1
    initial:
      - {amplitude: 0.2, center: [0.2], rate: 20.0}
  - valence: -1
    initial:
      - {amplitude: 0.4, center: [-0.2], rate: 20.0}
kernels:
  K: {family: exponential}
  W: {family: power_law, alpha: 0.5}
potential: {form: quadratic, a: 10.0}
output: {dir: out, prefix: tiny}
"""


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


def _problems(text):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    return err.value.problems


def test_missing_dt_named():
    assert "time.dt: missing required key" in _problems(SMALL.replace("dt: 0.01, ", ""))


def test_non_integrable_kernel():
    probs = _problems(SMALL.replace("alpha: 0.5", "alpha: 1.5"))
    assert any("kernel not integrable in 1D" in p for p in probs)


def test_unknown_key_with_line():
    probs = _problems(SMALL.replace("potential: {form: quadratic, a: 10.0}",
                                    "potential: {form: quadratic, a: 10.0}\nfoo: 1"))
    assert "foo (line 16): unknown key" in probs


def test_eps_zero_rejected():
    text = SMALL.replace("{family: power_law, alpha: 0.5}", "{family: regularized_power_law, alpha: 0.5, eps: 0.0}")
    assert any("eps > 0" in p for p in _problems(text))
    reg = (CONFIGS / "reg_compare_1d.yaml").read_text().replace("eps: [0.5,", "eps: [0.0,")
    assert any("eps = 0 is the singular kernel itself" in p for p in _problems(reg))


def test_all_problems_reported_together():
    probs = _problems(SMALL.replace("dt: 0.01, ", "").replace("N: 16", "N: 1"))
    assert len(probs) >= 2


def test_yaml_syntax_error_has_position():
    probs = _problems("mode: transient\ngrid: {dim: 1\n")
    assert any("line" in p and "column" in p for p in probs)


def test_duplicate_key_rejected():
    assert any("duplicate" in p for p in _problems(SMALL + "mode: transient\n"))


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.yaml")))
def test_bundled_configs_round_trip(name):
    cfg = load_config(CONFIGS / name)
    text = dump_config(cfg)
    again = parse_config(text)
    assert again == cfg
    assert dump_config(again) == text


def test_empty_series_writes_header_only(tmp_path):
    p = write_diagnostics([], tmp_path / "d.csv", 2)
    lines = p.read_text().splitlines()
    assert lines == ["t,E,D,mass_1,mass_2,linf_1,linf_2,clamped,iters"]


def test_snapshot_layout_and_round_trip(tmp_path):
    g = build_grid_1d(1.0, 2)
    c = np.random.default_rng(0).random((2, 5)) * 1e-7
    s = SpeciesState(g, (1, -1), c)
    p = write_snapshot(s, tmp_path / "s.csv")
    rows = p.read_text().splitlines()
    assert rows[0] == "x,c_1,c_2" and len(rows) == 6
    back = read_snapshot(p, (1, -1))
    np.testing.assert_array_equal(back.c, s.c)
    np.testing.assert_array_equal(back.grid.x, g.x)

    g2 = build_grid_2d(1.0, 0.5, 2, 3)
    s2 = SpeciesState(g2, (0,), np.random.default_rng(1).random((1,) + g2.shape))
    p2 = write_snapshot(s2, tmp_path / "s2.csv")
    first = p2.read_text().splitlines()[1:3]
    # y varies fastest
    assert [r.split(",")[0] for r in first] == ["-1", "-1"]
    np.testing.assert_array_equal(read_snapshot(p2).c, s2.c)


def test_run_writes_outputs(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    out = tmp_path / "res"
    assert main(["solve", str(cfg), "--out-dir", str(out), "--quiet"]) == 0
    header, diag = read_table(out / "tiny_diagnostics.csv")
    assert header[0] == "t" and diag[-1, 0] == pytest.approx(0.05) and len(diag) == 6
    index = (out / "tiny_snapshots.csv").read_text().splitlines()
    assert index[0] == "index,t,file" and len(index) == 1 + 4
    summary = json.loads((out / "tiny_summary.json").read_text())
    assert summary["blowup"] is False and summary["steps"] == 5


def test_thread_one_runs_are_byte_identical(tmp_path):
    text = SMALL.replace("mode: transient", "mode: eta_sweep") + "sweep: {kernel: W, eta: [0.0, 1.0, 2.0]}\n"
    cfg = _write(tmp_path, text)
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["solve", str(cfg), "--out-dir", str(d), "--threads", "1", "--quiet"]) == 0
    names = sorted(p.name for p in a.iterdir() if p.suffix == ".csv")
    assert names
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_check_prints_canonical(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    assert main(["check", str(cfg)]) == 0
    assert parse_config(capsys.readouterr().out) == load_config(cfg)


def test_exit_codes(tmp_path, capsys):
    bad = _write(tmp_path, SMALL.replace("dt: 0.01, ", ""), "bad.yaml")
    assert main(["solve", str(bad), "--quiet"]) == 2
    assert "time.dt: missing required key" in capsys.readouterr().err
    assert main(["bench", str(_write(tmp_path, SMALL)), "--quiet"]) == 2
    assert main(["solve", str(tmp_path / "missing.yaml")]) == 4
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["solve", str(_write(tmp_path, SMALL)), "--out-dir", str(blocker / "sub"), "--quiet"]) == 4
    # a two-dimensional run whose linear solver is starved of iterations
    starved = textwrap.dedent("""\
        mode: transient
        grid: {dim: 2, L: 1.0, N: 8}
        time: {dt: 1.0, t_end: 1.0}
        species:
          - valence: 0
            initial:
              - {amplitude: 1.0, center: [0.3, 0.0], rate: 30.0}
        kernels: {K: none, W: none}
        potential: {form: quadratic, a: 5.0}
        solver: {max_iter: 1}
        """)
    assert main(["solve", str(_write(tmp_path, starved, "s.yaml")), "--out-dir", str(tmp_path / "o"), "--quiet"]) == 3


def test_blowup_is_not_an_error(tmp_path):
    text = SMALL.replace("t_end: 0.05", "t_end: 5.0, blowup_ceiling: 0.3").replace("alpha: 0.5}", "alpha: 0.5, eta: 0.0}")
    cfg = _write(tmp_path, text)
    assert main(["solve", str(cfg), "--out-dir", str(tmp_path / "o"), "--quiet"]) == 0
    summary = json.loads((tmp_path / "o" / "tiny_summary.json").read_text())
    assert summary["blowup"] is True and summary["t_final"] < 5.0
