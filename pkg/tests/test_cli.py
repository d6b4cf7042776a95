import csv
import json
from fractions import Fraction as Q


from msmilp.cli import main
from msmilp.export import csv_text, qd, qv
from msmilp.rational import INF


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_solve_bnc_ex4(tmp_path, capsys):
    assert main(["solve", "ex4", "--algorithm", "bnc", "--out", str(tmp_path)]) == 0
    assert "objective: 3" in capsys.readouterr().out
    data = json.loads((tmp_path / "result.json").read_text())
    assert data["objective"]["exact"] == "3" and data["x"][0]["exact"] == "2"
    cuts = read_csv(tmp_path / "cuts.csv")
    assert cuts[0]["separated_vertex"] == "1;3"


def test_solve_benders_ex2(capsys):
    assert main(["solve", "ex2", "--algorithm", "benders", "--max-iter", "50"]) == 0
    assert "-59/2" in capsys.readouterr().out


def test_solve_lshaped_and_enumerate(capsys):
    assert main(["solve", "ex1", "--algorithm", "lshaped"]) == 0
    assert main(["solve", "ex4", "--algorithm", "enumerate", "--mode", "pessimistic"]) == 0


def test_exit_codes(tmp_path, capsys):
    broken = tmp_path / "broken.json"
    broken.write_text('{"n1": 1,\n  "r1": }\n')
    assert main(["solve", str(broken)]) == 4
    assert "line 2" in capsys.readouterr().err
    assert main(["solve", "ex4", "--mode", "pessimistic"]) == 4
    assert main(["solve", str(tmp_path / "missing.json")]) == 4
    assert main(["solve", "ex2", "--algorithm", "bnc"]) == 3
    assert main(["solve", "ex2", "--algorithm", "benders", "--max-iter", "1"]) == 5
    assert main(["oracle", "ex2", "--lattice-cap", "10"]) == 5
    assert main(["vf", "construct1d", "ex4"]) == 3
    infeasible = tmp_path / "inf.json"
    infeasible.write_text(json.dumps({
        "n1": 1, "r1": 1, "m1": 0, "c": [0], "A1": [], "b1": [], "x_lb": [0], "x_ub": [1],
        "n2": 1, "r2": 1, "m2": 1, "d1": [1], "d2": [1], "G2": [[1]], "y_lb": [0], "y_ub": [1],
        "scenarios": [{"p": 1, "A2": [[0]], "b2": [5]}],
        "objective_sense_stage1": "min", "objective_sense_stage2": "min",
        "row_sense_stage1": [], "row_sense_stage2": [">="]}))
    assert main(["solve", str(infeasible), "--algorithm", "bnc"]) == 2


def test_vf_sample_ex1_two_slopes(tmp_path):
    out = tmp_path / "vf.csv"
    assert main(["vf", "sample", "ex1", "--from", "-10", "--to", "10", "--step", "1", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 21
    phi = {Q(r["beta"]): Q(r["phi"]) for r in rows}
    for b, v in phi.items():
        assert v == (3 * b if b > 0 else -b)


def test_vf_sample_ex2(tmp_path):
    out = tmp_path / "vf.csv"
    assert main(["vf", "sample", "ex2", "--from", "0", "--to", "13", "--step", "1/2",
                 "--strong", "7/2", "--strong", "19/2", "--out", str(out)]) == 0
    rows = {Q(r["beta"]): r for r in read_csv(out)}
    assert rows[Q(5)]["phi"] == "4" and rows[Q(19, 2)]["phi"] == "17/2"
    for r in rows.values():
        assert Q(r["lower"]) <= Q(r["phi"]) <= Q(r["upper"])
    assert rows[Q(19, 2)]["lower"] == rows[Q(19, 2)]["upper"] == "17/2"


def test_vf_step_zero_is_usage_error(capsys):
    assert main(["vf", "sample", "ex1", "--from", "0", "--to", "1", "--step", "0"]) == 4


def test_vf_construct_and_dualfn(tmp_path):
    out = tmp_path / "c.csv"
    assert main(["vf", "construct1d", "ex2", "--out", str(out)]) == 0
    kinds = {r["kind"] for r in read_csv(out)}
    assert "breakpoint" in kinds and "segment" in kinds
    out2 = tmp_path / "d.csv"
    tree = tmp_path / "tree.json"
    assert main(["vf", "dualfn", "ex2", "--at", "7/2", "--fn-mode", "leaf", "--out", str(out2),
                 "--tree-out", str(tree)]) == 0
    pieces = {(r["slope_1"], r["const"]) for r in read_csv(out2)}
    assert pieces == {("1", "0"), ("-3/2", "23/2")}
    assert json.loads(tree.read_text())["format"] == "msmilp-bnb-tree/1"


def test_oracle_and_crosscheck(tmp_path, capsys):
    assert main(["oracle", "ex4", "--out", str(tmp_path)]) == 0
    xi = read_csv(tmp_path / "xi.csv")
    assert len(xi) == 3
    assert main(["crosscheck", "--count", "3", "--seed", "5", "--out", str(tmp_path / "cc.csv")]) == 0
    cap = capsys.readouterr()
    assert "3/3" in cap.out + cap.err


def test_outputs_byte_stable(tmp_path):
    runs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        assert main(["solve", "ex2", "--algorithm", "benders", "--out", str(d)]) == 0
        assert main(["vf", "sample", "ex2", "--from", "0", "--to", "6", "--step", "1/3",
                     "--strong", "5", "--out", str(d / "vf.csv")]) == 0
        assert main(["crosscheck", "--count", "2", "--seed", "9", "--out", str(d / "cc.csv")]) == 0
        runs.append([(d / n).read_bytes() for n in ("iterations.csv", "cuts.csv", "vf.csv", "cc.csv")])
    assert runs[0] == runs[1]


def test_export_helpers():
    assert qv((Q(1, 2), Q(3))) == "1/2;3"
    assert qd(Q(1, 4)) == ["1/4", "0.25"]
    assert qd(INF)[0] == "inf"
    assert csv_text(["a", "b"], [[1, 2]]) == "a,b\n1,2\n"
