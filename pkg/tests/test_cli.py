import csv
import io
import json
import math

import pytest

from common.utils.diff_utils import format_number, format_point, format_values
from difflang.cli import main
from difflang.models import MODELS_DIR

SUM = str(MODELS_DIR / "sum.dl")
BREITWIGNER = str(MODELS_DIR / "breitwigner.dl")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestGrad:

    def test_gradient_at_point(self, capsys):
        code, out, _ = run(capsys, "grad", "-f", SUM, "--wrt", "p", "--at", "p=[1,2,3],dim=3")
        assert code == 0
        assert out == "[1, 1, 1]\n"

    def test_finite_differences_json(self, capsys):
        code, out, _ = run(capsys, "grad", "-f", SUM, "--backend", "fd", "--at", "p=[1,2,3],dim=3", "--format", "json")
        assert code == 0
        body = json.loads(out)
        assert body["func_evals"] == 6
        assert body["slots"] == ["p[0]", "p[1]", "p[2]"]
        assert body["values"] == pytest.approx([1.0, 1.0, 1.0], rel=1e-6)

    def test_source_without_point(self, capsys):
        code, out, _ = run(capsys, "grad", "-f", SUM)
        assert code == 0
        assert out.startswith("double sum_grad(double* p, int dim, double* _result)")

    def test_fd_needs_point(self, capsys):
        code, _, err = run(capsys, "grad", "-f", SUM, "--backend", "fd")
        assert code == 2
        assert "--at" in err

    def test_output_file(self, capsys, tmp_path):
        target = tmp_path / "g.txt"
        code, out, _ = run(capsys, "grad", "-f", SUM, "--at", "p=[1,2],dim=2", "-o", str(target))
        assert code == 0
        assert out == ""
        assert target.read_text() == "[1, 1]\n"


class TestDifferentiateThenEval:

    def test_breitwigner_derivative_is_zero(self, capsys, monkeypatch):
        code, source, _ = run(capsys, "differentiate", "-f", BREITWIGNER, "--wrt", "gamma")
        assert code == 0
        assert "breitwigner_pdf_dgamma" in source

        monkeypatch.setattr("sys.stdin", io.StringIO(source))
        code, out, _ = run(capsys, "eval", "-f", "-", "--at", "x=1,gamma=2,x0=0")
        assert code == 0
        assert out == "0\n"

    def test_reverse_mode(self, capsys):
        code, out, _ = run(capsys, "differentiate", "-f", SUM, "--wrt", "p", "--mode", "reverse", "--format", "json")
        assert code == 0
        assert json.loads(out)["function"] == "sum_grad"

    def test_eval(self, capsys):
        code, out, _ = run(capsys, "eval", "-f", SUM, "--at", "p=[0.5,0.25],dim=2")
        assert code == 0
        assert out == "0.75\n"


class TestErrors:

    def test_usage_errors(self, capsys):
        assert run(capsys, "grad")[0] == 2
        assert run(capsys, "nope")[0] == 2
        assert run(capsys, "bench", "--dims", "5,x")[0] == 2
        assert run(capsys, "bench", "--backends", "magic", "--no-timing")[0] == 2

    def test_parse_error_has_position(self, capsys, tmp_path):
        bad = tmp_path / "bad.dl"
        bad.write_text("double f(double x) {\n  return x +;\n}\n")
        code, _, err = run(capsys, "eval", "-f", str(bad), "--at", "x=1")
        assert code == 1
        diagnostic = [line for line in err.splitlines() if line.startswith(f"{bad}:2:")]
        assert diagnostic and ": error:" in diagnostic[0]

    def test_domain_error(self, capsys, tmp_path):
        src = tmp_path / "log.dl"
        src.write_text("double f(double x) { return log(x); }\n")
        code, _, err = run(capsys, "eval", "-f", str(src), "--at", "x=-1")
        assert code == 1
        assert "log" in err

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "eval", "-f", str(tmp_path / "none.dl"), "--at", "x=1")
        assert code == 1
        assert "error" in err

    def test_unknown_wrt(self, capsys):
        code, _, err = run(capsys, "grad", "-f", SUM, "--wrt", "q", "--at", "p=[1],dim=1")
        assert code == 1
        assert "q" in err


class TestCheckBenchFit:

    def test_check_corpus_model(self, capsys):
        code, out, _ = run(capsys, "check", "--fn", "gaus", "--points", "5")
        assert code == 0
        assert out.startswith("gaus: 5 points, 10 comparisons, 0 disagreements")

    def test_check_file(self, capsys):
        code, out, _ = run(capsys, "check", "-f", SUM, "--fn", "sum", "--points", "3", "--dim", "4", "--format", "json")
        assert code == 0
        assert len(json.loads(out)["rows"]) == 6

    def test_bench_csv(self, capsys):
        code, out, _ = run(capsys, "bench", "--model", "sum", "--dims", "5,64,512", "--format", "csv", "--no-timing")
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        assert len(rows) == 6
        assert [r["backend"] for r in rows[:2]] == ["rev-AD", "ND"]

    def test_bench_accuracy_at_point(self, capsys):
        code, out, _ = run(capsys, "bench", "--model", "breitwigner_pdf", "--kind", "accuracy",
                           "--at", "x=1,gamma=2,x0=0", "--wrt", "gamma", "--format", "json")
        assert code == 0
        rows = json.loads(out)["rows"]
        assert {r["backend"]: r["max_abs_err"] for r in rows}["rev-AD"] == 0.0

    def test_bench_unknown_model(self, capsys):
        code, _, err = run(capsys, "bench", "--model", "nope", "--no-timing")
        assert code == 1
        assert "known:" in err

    def test_fit_json(self, capsys):
        code, out, _ = run(capsys, "fit", "--bins", "30", "--samples", "20000", "--init", "0.3,0.2,1.3",
                           "--max-iter", "300", "--format", "json")
        body = json.loads(out)
        assert code == (0 if body["converged"] else 1)
        assert body["backend"] == "ad"
        assert body["func_evals"] == body["grad_evals"]

    def test_fit_wrong_init_arity(self, capsys):
        code, _, err = run(capsys, "fit", "--init", "1,2")
        assert code == 1
        assert "initial values" in err

    def test_fit_from_histogram_file(self, capsys, tmp_path):
        hist = tmp_path / "h.csv"
        hist.write_text("lo,hi,count\n-1,0,5\n0,1,5\n")
        code, out, _ = run(capsys, "fit", "--hist", str(hist), "--max-iter", "5")
        assert code in (0, 1)
        assert out.startswith("A = ")

    def test_bench_primitives(self, capsys):
        code, out, _ = run(capsys, "bench", "--kind", "primitives", "--no-timing", "--format", "json")
        assert code == 0
        body = json.loads(out)
        assert body["kind"] == "primitives"
        assert {r["model"] for r in body["rows"]} == {"gaus", "expo", "breitwigner_pdf"}
        assert all(r["valid"] for r in body["rows"])

    def test_bench_primitives_one_model(self, capsys):
        code, out, _ = run(capsys, "bench", "--kind", "primitives", "--model", "expo", "--reps", "5")
        assert code == 0
        assert "breitwigner" not in out
        assert "speedup ND/rev-AD expo dim=3" in out


class TestNumberFormat:

    @pytest.mark.parametrize("value, text", [
        (1.0, "1"),
        (-3.0, "-3"),
        (0.0, "0"),
        (-0.0, "-0"),
        (0.75, "0.75"),
        (1e20, "1e+20"),
        (0.1, "0.1"),
    ])
    def test_format_number(self, value, text):
        assert format_number(value) == text

    @pytest.mark.parametrize("value", [-0.0, 0.1, 1.0 / 3.0, 2.0 ** 60, -1e-300])
    def test_reads_back_exactly(self, value):
        back = float(format_number(value))
        assert back == value
        assert math.copysign(1.0, back) == math.copysign(1.0, value)

    def test_point_and_values(self):
        assert format_values([1.0, -0.0, 0.5]) == "[1, -0, 0.5]"
        assert format_point({"p": [1.0, 2.0], "dim": 2}) == "p=[1, 2],dim=2"
