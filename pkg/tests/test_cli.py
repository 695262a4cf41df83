import json
import subprocess
import sys

import pytest

from polyrmdp.cli import CSV_COLUMNS, csv_to_rows, main, rows_to_csv
from polyrmdp.model import SolveReport, dumps_rmdp, loads_rmdp, report_dict_violations

from conftest import make_m1, make_m2


@pytest.fixture
def files(tmp_path):
    paths = {"m1": tmp_path / "m1.json", "m2": tmp_path / "m2.json"}
    paths["m1"].write_text(dumps_rmdp(make_m1()))
    paths["m2"].write_text(dumps_rmdp(make_m2()))
    return paths


def test_solve_m1(files, tmp_path):
    out = tmp_path / "r.json"
    assert main(["solve", "--input", str(files["m1"]), "--output", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["value_at_initial"] == 5.0
    assert report_dict_violations(d) == []
    assert SolveReport.from_dict(d, make_m1()).value_at_initial == 5.0


@pytest.mark.parametrize("alg", ["rppi", "rvi", "rrvi", "brute"])
def test_solve_reports_validate(files, tmp_path, alg):
    out = tmp_path / f"{alg}.json"
    assert main(["solve", "--algorithm", alg, "--input", str(files["m2"]), "--output", str(out)]) == 0
    d = json.loads(out.read_text())
    assert report_dict_violations(d) == []
    assert abs(d["value_at_initial"] - 0.375) <= 1e-3


def test_solve_vi_needs_gamma(files):
    assert main(["solve", "--algorithm", "vi", "--input", str(files["m1"])]) == 2
    assert main(["solve", "--algorithm", "vi", "--gamma", "0.5", "--input", str(files["m1"])]) == 0


def test_malformed_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    assert main(["solve", "--input", str(bad)]) == 2
    assert "malformed" in capsys.readouterr().err


def test_brute_over_budget(tmp_path, capsys):
    p = tmp_path / "lake.json"
    assert main(["gen", "frozen-lake", "--n", "4", "--output", str(p)]) == 0
    assert main(["solve", "--algorithm", "brute", "--budget", "100", "--input", str(p)]) == 4
    assert "budget" in capsys.readouterr().err


def test_timeout_exit_code(tmp_path):
    p = tmp_path / "lake.json"
    main(["gen", "frozen-lake", "--n", "4", "--output", str(p)])
    assert main(["solve", "--algorithm", "rvi", "--reference", "0.387", "--timeout", "0.2",
                 "--input", str(p)]) == 3


def test_verify(files, tmp_path, capsys):
    pol = tmp_path / "pol.json"
    pol.write_text(json.dumps({"s0": "a0", "s1": "a0"}))
    assert main(["verify", "--input", str(files["m2"]), "--policy", str(pol), "--threshold", "0.3"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.375)
    assert main(["verify", "--input", str(files["m2"]), "--policy", str(pol), "--threshold", "0.4"]) == 1
    pol.write_text(json.dumps({"s0": "a0"}))
    assert main(["verify", "--input", str(files["m2"]), "--policy", str(pol), "--threshold", "0.3"]) == 2


def test_verify_accepts_report(files, tmp_path):
    rep = tmp_path / "r.json"
    main(["solve", "--input", str(files["m2"]), "--output", str(rep)])
    assert main(["verify", "--input", str(files["m2"]), "--policy", str(rep), "--threshold", "0.375"]) == 0


def test_reduce(files, tmp_path):
    out = tmp_path / "g.json"
    assert main(["reduce", "--input", str(files["m2"]), "--output", str(out)]) == 0
    d = json.loads(out.read_text())
    assert len(d["max_states"]) == 2 and len(d["min_states"]) == 2 and d["n_min_actions"] == 4
    assert main(["reduce", "--input", str(files["m1"]), "--objective", "disc", "--output", str(out)]) == 0
    assert json.loads(out.read_text())["discount_mode"] == "alternate_step"


@pytest.mark.parametrize("family", ["contamination", "frozen-lake", "tiny"])
def test_gen(tmp_path, family):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert main(["gen", family, "--n", "3", "--seed", "5", "--output", str(p)]) == 0
    assert a.read_text() == b.read_text()
    loads_rmdp(a.read_text())


def test_gen_holes(tmp_path):
    p = tmp_path / "a.json"
    main(["gen", "frozen-lake", "--n", "3", "--holes", "1,1;2,0", "--output", str(p)])
    assert loads_rmdp(p.read_text()).n_states == 7


def test_bench_lake_unichain(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bench", "--family", "frozen-lake-unichain", "--sizes", "2-4", "--algorithms", "rppi,rvi",
                 "--output", str(out)]) == 0
    text = out.read_text()
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    rows = csv_to_rows(text)
    assert len(rows) == 6 and all(r.status == "Ok" for r in rows)
    assert [(r.n, r.algorithm) for r in rows] == sorted((r.n, r.algorithm) for r in rows)
    by = {(r.n, r.algorithm): r.value for r in rows}
    for n in (2, 3, 4):
        assert abs(by[n, "rppi"] - by[n, "rvi"]) <= 1e-3
    assert rows_to_csv(rows) == text


def test_bench_inapplicable(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bench", "--family", "frozen-lake-multichain", "--sizes", "2", "--output", str(out)]) == 0
    status = {r.algorithm: r.status for r in csv_to_rows(out.read_text())}
    assert status == {"rppi": "Ok", "rvi": "Inapplicable", "rrvi": "Inapplicable"}


def test_bench_contamination_single_state(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bench", "--family", "contamination", "--sizes", "1", "--seed", "4", "--output", str(out)]) == 0
    rows = csv_to_rows(out.read_text())
    m = loads_rmdp(_gen(tmp_path, ["contamination", "--n", "1", "--seed", "4"]))
    for r in rows:
        assert r.status == "Ok"
        assert r.value == pytest.approx(m.rewards[0].max(), abs=1e-3)


def _gen(tmp_path, args):
    p = tmp_path / "g.json"
    main(["gen", *args, "--output", str(p)])
    return p.read_text()


def test_bench_timeout_row(tmp_path):
    out = tmp_path / "b.csv"
    main(["bench", "--family", "frozen-lake-unichain", "--sizes", "4", "--algorithms", "rvi",
          "--timeout", "0.2", "--output", str(out)])
    (row,) = csv_to_rows(out.read_text())
    assert row.status == "Timeout" and row.wall_clock_seconds == 0.2


def test_bench_deterministic_values(tmp_path):
    outs = []
    for i, jobs in enumerate(("1", "2")):
        p = tmp_path / f"b{i}.csv"
        main(["bench", "--family", "contamination", "--sizes", "2,3", "--seeds", "1,2", "--jobs", jobs,
              "--output", str(p)])
        outs.append([(r.family, r.n, r.seed, r.algorithm, r.value, r.status) for r in csv_to_rows(p.read_text())])
    assert outs[0] == outs[1]


def test_console_script(files):
    proc = subprocess.run([sys.executable, "-m", "polyrmdp.cli", "solve", "--input", str(files["m1"])],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["value_at_initial"] == 5.0
