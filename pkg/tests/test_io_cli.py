import json
import math

import numpy as np
import pytest

from conecsa.cli import main, parse_regime, run_command
from conecsa.cone import ConeSpec
from conecsa.es import SAMPLE_FIELDS, DynamicsSeries, EsConfig, run_es
from conecsa.io import (
    PRESETS,
    ConfigError,
    config_from_dict,
    config_to_dict,
    dump_config,
    emit_series_csv,
    load_config,
    load_preset,
    read_series_csv,
    read_table,
)
from conecsa.report import ComparisonRow, ComparisonReport
from conecsa.steady import SsRegime

SMALL = ["--n", "20", "--xi", "10", "--mu", "3", "--lambda", "10", "--max-gen", "60"]


# configuration -------------------------------------------------------------


def test_minimal_config_gets_defaults():
    cfg = config_from_dict({"n": 400, "xi": 10, "mu": 3, "lambda": 10})
    assert cfg.es.c == pytest.approx(0.05)
    assert cfg.es.d == pytest.approx(20.0)
    assert cfg.es.sigma0 == 1e-4 and cfg.es.x0 == 100.0 and cfg.es.r0 is None
    assert cfg.repeats == 1 and cfg.csa == (cfg.es.c, cfg.es.d)


@pytest.mark.parametrize(
    "doc, field",
    [
        ({"n": 400, "xi": 10, "mu": 10, "lambda": 10}, "es"),
        ({"n": 400, "xi": 10, "mu": 3}, "lambda"),
        ({"n": 400.5, "xi": 10, "mu": 3, "lambda": 10}, "n"),
        ({"n": 1, "xi": 10, "mu": 3, "lambda": 10}, "n/xi"),
        ({"n": 400, "xi": 10, "mu": 3, "lambda": 10, "colour": "red"}, "colour"),
        ({"n": 400, "xi": 10, "mu": 3, "lambda": 10, "repeats": 0}, "repeats"),
        ({"n": 400, "xi": 10, "mu": 3, "lambda": 10, "mode": "fly"}, "mode"),
        ({"n": 400, "xi": 10, "mu": 3, "lambda": 10, "tail_fraction": 0}, "tail_fraction"),
        ({"n": 400, "xi": 10, "mu": 3, "lambda": 10, "xi_grid": [1, -2]}, "xi_grid"),
    ],
)
def test_config_validation_names_the_field(doc, field):
    with pytest.raises(ConfigError, match=field):
        config_from_dict(doc)


def test_config_dump_load_round_trip(tmp_path):
    doc = {"n": 50, "xi": 3.5, "mu": 2, "lambda": 7, "c": 0.1, "seed": 9, "xi_grid": [1, 2], "repeats": 4}
    cfg = config_from_dict(doc)
    path = tmp_path / "cfg.json"
    dump_config(cfg, path)
    again = load_config(path)
    assert again == cfg
    assert config_to_dict(again) == json.loads(path.read_text())


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load(name):
    cfg = load_preset(name)
    assert cfg.cone.n in (400, 1000, 10_000)
    assert cfg.es.mu == 3 and cfg.es.lam == 10
    assert cfg.xi_grid or name == "fig3"


def test_unknown_preset():
    with pytest.raises(ConfigError):
        load_preset("fig9")


# csv -------------------------------------------------------------------------


def test_series_csv_round_trip_is_bit_exact(tmp_path):
    series = run_es(ConeSpec(20, 10.0), EsConfig.with_defaults(20, 3, 10, max_gen=50, seed=4))
    path = tmp_path / "s.csv"
    emit_series_csv(series, path)
    back = read_series_csv(path)
    for k in SAMPLE_FIELDS:
        np.testing.assert_array_equal(back.data[k], series.data[k])
    assert back.data["gen"].dtype == np.int64
    assert back.config == series.config and back.seeds == series.seeds


def test_empty_series_writes_header_and_metadata_only(tmp_path):
    cone = ConeSpec(20, 10.0)
    series = DynamicsSeries.empty(cone, EsConfig.with_defaults(20, 3, 10))
    path = tmp_path / "e.csv"
    emit_series_csv(series, path, reproducible=True)
    lines = path.read_text().splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    assert body == [",".join(SAMPLE_FIELDS)]
    meta, cols, rows = read_table(path)
    assert rows == [] and meta["n"] == 20 and "created" not in meta


def test_csv_columns_are_constant(tmp_path):
    path = tmp_path / "sim.csv"
    assert run_command(["simulate", *SMALL, "-o", str(path)]) == 0
    body = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    assert len(body) == 61
    assert {len(ln.split(",")) for ln in body} == {len(SAMPLE_FIELDS)}


# report -----------------------------------------------------------------------


def test_comparison_row_errors_recomputable():
    row = ComparisonRow("sigma_star", 5.0, 0.1, 6.0, 5.5, 6.2, tolerance=0.25, tolerance_experimental=0.05)
    assert row.rel_err_closed == pytest.approx(0.2)
    assert row.rel_err_experimental == pytest.approx(0.1)
    assert row.passed is False
    free = ComparisonRow("s1", 1.0, 0.0, 2.0, math.nan, math.nan)
    assert free.passed is None
    rep = ComparisonReport(400, 10.0, [free])
    assert rep.ok
    rep.rows.append(row)
    assert not rep.ok and rep.row("sigma_star") is row


# command line -------------------------------------------------------------------


def test_coeff_single_offspring(capsys):
    assert run_command(["coeff", "--mu", "1", "--lambda", "1"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[1].split("\t")[2] == "0"


def test_coeff_with_monte_carlo(capsys):
    assert run_command(["coeff", "--mu", "1", "3", "--lambda", "10", "--mc", "20000"]) == 0
    rows = [ln.split("\t") for ln in capsys.readouterr().out.splitlines()[1:]]
    for row in rows:
        assert abs(float(row[2]) - float(row[3])) < 5 * float(row[4])


def test_steady_state_large_xi_regime(capsys):
    assert run_command(["steady-state", "--regime", "sqrtN-large-xi", "--mu", "3", "--lambda", "10"]) == 0
    lines = [ln for ln in capsys.readouterr().out.splitlines() if not ln.startswith("#")]
    header, row = lines[0].split(","), lines[1].split(",")
    assert float(row[header.index("sigma_ss_star")]) == pytest.approx(6.39, abs=0.01)


def test_steady_state_reports_missing_roots(tmp_path):
    path = tmp_path / "ss.csv"
    args = ["steady-state", "--mu", "1", "--lambda", "2", "--regime", "oneOverN", "numeric", "-o", str(path)]
    assert run_command(args) == 0
    _, cols, rows = read_table(path)
    assert math.isnan(rows[0][cols.index("sigma_ss_star")])
    assert rows[0][cols.index("note")]


def test_parse_regime_accepts_spellings():
    assert parse_regime("sqrtN_Simplified") is SsRegime.SqrtN_Simplified
    assert parse_regime("oneOverN-large-xi") is SsRegime.OneOverN_LargeXi
    with pytest.raises(ConfigError):
        parse_regime("quadratic")


@pytest.mark.parametrize(
    "argv",
    [
        ["launch"],
        ["simulate", "--n", "20", "--xi", "10", "--mu", "10", "--lambda", "10"],
        ["simulate", "--n", "20"],
        ["coeff", "--mu", "4", "--lambda", "3"],
        ["steady-state", "--regime", "nonsense"],
        ["compare", *SMALL, "--tolerance", "sigma_star"],
    ],
)
def test_usage_and_config_errors_exit_2(argv, capsys):
    assert run_command(argv) == 2
    assert "error" in capsys.readouterr().err


def test_bad_config_file_exits_2(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"n": 20, "xi": 10, "mu": 3, "lambda": 2}))
    assert run_command(["simulate", "--config", str(path)]) == 2


def test_io_failure_exits_3(tmp_path):
    assert run_command(["simulate", *SMALL, "-o", str(tmp_path / "missing" / "x.csv")]) == 3
    assert run_command(["simulate", "--config", str(tmp_path / "nope.json")]) == 3


def test_main_exits_with_code(capsys):
    with pytest.raises(SystemExit) as info:
        main(["coeff", "--mu", "1", "--lambda", "1"])
    assert info.value.code == 0


def test_reproducible_output_is_byte_identical(tmp_path):
    outs = []
    for i, workers in enumerate(("1", "2")):
        path = tmp_path / f"run{i}.csv"
        argv = ["simulate", *SMALL, "--repeats", "3", "--workers", workers, "--reproducible", "-o", str(path)]
        assert run_command(argv) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_iterate_writes_trajectory(tmp_path):
    for mode in ("closed", "experimental"):
        path = tmp_path / f"{mode}.csv"
        argv = ["iterate", *SMALL, "--mode", mode, "--trials", "200", "-o", str(path)]
        assert run_command(argv) == 0
        meta, cols, rows = read_table(path)
        assert meta["mode"] == mode and len(rows) == 61
        assert tuple(cols) == SAMPLE_FIELDS
        assert rows[0][cols.index("q_mean")] == rows[1][cols.index("x")]


def test_compare_exit_code_follows_report(tmp_path, capsys):
    base = ["compare", *SMALL, "--repeats", "2", "--reproducible"]
    loose = tmp_path / "loose.csv"
    assert run_command([*base, "--tolerance", "sigma_star=1e9", "-o", str(loose)]) == 0
    strict = tmp_path / "strict.csv"
    assert run_command([*base, "--tolerance", "sigma_star=1e-12", "-o", str(strict)]) == 1
    _, cols, rows = read_table(strict)
    verdicts = {r[cols.index("quantity")]: r[cols.index("passed")] for r in rows}
    assert verdicts["sigma_star"] == "FAIL"
    assert "tolerance FAILED" in capsys.readouterr().out
