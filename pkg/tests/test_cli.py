"""Config parsing, sweep driver, and CSV output tests."""

import os

import pytest

from crmacsim.cli import (
    CSV_COLUMNS,
    main,
    parse_config,
    parse_flow_spec,
)
from crmacsim.engine import Scenario
from crmacsim.errors import ConfigurationError

from _support import write_positions


# -- flow specs --------------------------------------------------------


def test_flow_spec_single_and_ranges():
    assert parse_flow_spec("8") == [8]
    assert parse_flow_spec("1..24:4") == [1, 5, 9, 13, 17, 21]
    assert parse_flow_spec("1..4") == [1, 2, 3, 4]
    assert parse_flow_spec("24, 1..8:7") == [1, 8, 24]
    assert parse_flow_spec("4,4,4") == [4]


@pytest.mark.parametrize("bad", ["abc", "5..3", "1..4:0", "-2", "", "1..x"])
def test_flow_spec_rejects_garbage(bad):
    with pytest.raises(ConfigurationError):
        parse_flow_spec(bad)


# -- config files ------------------------------------------------------


def test_empty_config_is_the_default_scenario(tmp_path):
    p = tmp_path / "empty.ini"
    p.write_text("")
    from crmacsim.baseline import BaselineConfig

    # identical to the stock scenario, with the reference MAC's defaults
    # spelled out rather than deferred
    assert parse_config(str(p)) == Scenario(baseline=BaselineConfig())


def test_config_overrides_reach_the_scenario(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text(
        "[scenario]\n"
        "nodes = 20\n"
        "flows = 3\n"
        "duration = 120\n"
        "[frame]\n"
        "num_slots = 10\n"
        "[channels]\n"
        "data_rates = 2e6, 5.5e6\n"
        "[flags]\n"
        "overhear = off\n"
        "[traffic]\n"
        "queue_limit = 25\n"
    )
    s = parse_config(str(p))
    assert s.num_nodes == 20 and s.num_flows == 3 and s.duration == 120.0
    assert s.frame.num_slots == 10
    assert s.channels.data_rates == (2e6, 5.5e6)
    assert s.flags.overhear is False
    assert s.traffic.queue_limit == 25


def test_config_rejects_unknown_section(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[wireless]\nfoo = 1\n")
    with pytest.raises(ConfigurationError, match=r"unknown section \[wireless\]"):
        parse_config(str(p))


def test_config_rejects_unknown_key_and_names_the_candidates(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[frame]\nslots = 10\n")
    with pytest.raises(ConfigurationError) as e:
        parse_config(str(p))
    msg = str(e.value)
    assert "'slots'" in msg and "[frame]" in msg and "num_slots" in msg


def test_config_rejects_bad_values_by_key(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[scenario]\nnodes = many\n")
    with pytest.raises(ConfigurationError, match=r"\[scenario\] nodes"):
        parse_config(str(p))


def test_config_reports_parse_errors_with_line_numbers(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("nodes = 5\n")
    with pytest.raises(ConfigurationError, match="line 1"):
        parse_config(str(p))


def test_config_validation_errors_surface(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[frame]\nnum_slots = 0\n")
    with pytest.raises(ConfigurationError, match="num_slots"):
        parse_config(str(p))


def test_missing_config_file_is_a_clean_error(tmp_path):
    with pytest.raises(ConfigurationError, match="cannot read"):
        parse_config(str(tmp_path / "absent.ini"))


# -- end-to-end sweeps -------------------------------------------------


def small_config(tmp_path):
    nodes = write_positions(tmp_path / "pair.txt",
                            [(100.0, 100.0), (200.0, 100.0)])
    cfg = tmp_path / "small.ini"
    cfg.write_text(
        "[scenario]\n"
        "nodes = 2\n"
        "flows = 1\n"
        "duration = 12\n"
        "positions_file = %s\n"
        "[pu]\n"
        "count = 0\n" % nodes
    )
    return str(cfg)


def run_main(tmp_path, out_name, *extra):
    out = str(tmp_path / out_name)
    code = main(["--config", small_config(tmp_path), "--flows", "1",
                 "--out", out, *extra])
    return code, out


def test_main_writes_the_expected_rows(tmp_path, capsys):
    code, out = run_main(tmp_path, "r.csv", "--reproducible")
    assert code == 0
    lines = open(out).read().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    body = [l.split(",") for l in lines[1:]]
    data = [r for r in body if r[-1] == ""]
    means = [r for r in body if r[-1] == "mean"]
    # both protocols at one load point, plus per-point summary rows
    assert [r[0] for r in data] == ["baseline", "crmac"]
    assert len(means) == 2
    # normalization divides by the baseline run of the same configuration
    base_tp = float(data[0][4])
    crmac_norm = float(data[1][5])
    assert crmac_norm == pytest.approx(float(data[1][4]) / base_tp)
    assert "wrote" in capsys.readouterr().out


def test_reproducible_output_is_byte_identical(tmp_path):
    _, a = run_main(tmp_path, "a.csv", "--reproducible")
    _, b = run_main(tmp_path, "b.csv", "--reproducible")
    assert open(a, "rb").read() == open(b, "rb").read()


def test_default_output_carries_a_timestamp(tmp_path):
    _, out = run_main(tmp_path, "t.csv")
    first = open(out).readline()
    assert first.startswith("# generated ")


def test_single_protocol_run(tmp_path):
    code, out = run_main(tmp_path, "c.csv", "--protocol", "crmac",
                         "--reproducible")
    assert code == 0
    rows = [l.split(",") for l in open(out).read().splitlines()[1:]]
    assert all(r[0] == "crmac" for r in rows)
    # no baseline run in the sweep: nothing to normalize against
    data = [r for r in rows if r[-1] == ""]
    assert data and all(r[5] == "" for r in data)


def test_trace_files_are_written_per_run(tmp_path):
    tdir = str(tmp_path / "traces")
    code, _ = run_main(tmp_path, "tr.csv", "--trace", tdir)
    assert code == 0
    names = sorted(os.listdir(tdir))
    assert names == ["baseline_f1_t0_s1.trace", "crmac_f1_t0_s1.trace"]
    for n in names:
        assert os.path.getsize(os.path.join(tdir, n)) > 0


def test_bad_config_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[scenario]\nnodes = many\n")
    assert main(["--config", str(p)]) == 2
    assert "error:" in capsys.readouterr().err


def test_bad_sweep_args_exit_2(tmp_path, capsys):
    assert main(["--config", small_config(tmp_path), "--seeds", "0"]) == 2
    capsys.readouterr()


def test_flows_override_changes_the_sweep(tmp_path):
    out = str(tmp_path / "f.csv")
    code = main(["--config", small_config(tmp_path), "--flows", "0,1",
                 "--protocol", "crmac", "--out", out, "--reproducible"])
    assert code == 0
    rows = [l.split(",") for l in open(out).read().splitlines()[1:]]
    data = [r for r in rows if r[-1] == ""]
    assert [int(r[3]) for r in data] == [0, 1]
