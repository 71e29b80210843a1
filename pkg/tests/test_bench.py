import csv
import io
import json

import pytest
from pydantic import ValidationError

from common.models import Backend, BenchReport, BenchRow
from difflang.bench import filler, generic_entry, run_accuracy, run_check, run_primitives, run_scaling, scaling_wrt
from difflang.errors import UnknownParameter
from difflang.lang.parser import parse
from difflang.models import get_model, sample_points


class TestScaling:

    def test_rows_and_counts(self):
        report = run_scaling("sum", [5, 64], reps=5, timing=False)
        assert [(r.dim, r.backend) for r in report.rows] == [
            (5, Backend.REV_AD), (5, Backend.ND), (64, Backend.REV_AD), (64, Backend.ND),
        ]
        for row in report.rows:
            assert row.valid
            assert row.median_ns is None
            assert row.func_evals == (1 if row.backend == Backend.REV_AD else 2 * row.dim)
        assert report.repetitions == 5

    def test_report_is_deterministic_without_timing(self):
        a = run_scaling("mvn", [5, 16], timing=False)
        b = run_scaling("mvn", [5, 16], timing=False)
        assert a.to_json() == b.to_json()
        assert a.to_csv() == b.to_csv()

    def test_degenerate_dimension(self):
        report = run_scaling("sum", [1], backends=[Backend.REV_AD, Backend.ND, Backend.FWD_AD], timing=False)
        assert all(r.valid and r.max_abs_err < 1e-6 for r in report.rows)

    def test_timing_is_recorded(self):
        report = run_scaling("sum", [5], reps=5)
        assert all(r.median_ns is not None and r.median_ns > 0 for r in report.rows)
        assert set(report.speedups("sum")) == {5}

    def test_dims_must_ascend(self):
        with pytest.raises(ValueError):
            run_scaling("sum", [64, 5], timing=False)
        with pytest.raises(ValueError):
            run_scaling("sum", [0], timing=False)

    def test_scalar_model_cannot_scale(self):
        with pytest.raises(UnknownParameter):
            run_scaling("gaus", [5], timing=False)

    def test_filler(self):
        args = filler(get_model("mvn"), 4)
        assert args == {"x": [0.5, 0.75, 1.0, 1.25], "p": [1.0, 1.25, 1.5, 1.75], "sigma": 1.0, "dim": 4}
        assert scaling_wrt(get_model("mvn")) == ["p"]


class TestAccuracy:

    def test_breitwigner_ad_exact_nd_not(self):
        report = run_accuracy("breitwigner_pdf", [{"x": 1.0, "gamma": 2.0, "x0": 0.0}], wrt=["gamma"])
        errors = {r.backend: r.max_abs_err for r in report.rows}
        assert errors[Backend.FWD_AD] == 0.0
        assert errors[Backend.REV_AD] == 0.0
        assert errors[Backend.ND] <= 1e-8
        assert report.rows[0].point == "x=1,gamma=2,x0=0"

    def test_breitwigner_away_from_zero(self):
        report = run_accuracy("breitwigner_pdf", [{"x": 1.0, "gamma": 3.0, "x0": 0.0}], wrt=["gamma"])
        errors = {r.backend: r.max_abs_err for r in report.rows}
        assert errors[Backend.FWD_AD] <= 1e-12
        assert errors[Backend.REV_AD] <= 1e-12
        assert errors[Backend.ND] <= 1e-5

    def test_sum_points(self):
        points = sample_points(get_model("sum"), 3, seed=2)
        report = run_accuracy("sum", points)
        assert len(report.rows) == 9
        assert all(r.valid and r.max_abs_err <= 1e-6 and r.dim == 5 for r in report.rows)


class TestPrimitives:

    def test_fixed_dimension_models(self):
        report = run_primitives(timing=False)
        assert report.kind == "primitives"
        assert [(r.model, r.backend) for r in report.rows[:3]] == [
            ("breitwigner_pdf", Backend.FWD_AD), ("breitwigner_pdf", Backend.REV_AD), ("breitwigner_pdf", Backend.ND),
        ]
        assert {r.model: r.dim for r in report.rows} == {"gaus": 4, "expo": 3, "breitwigner_pdf": 3}
        for row in report.rows:
            assert row.valid
            assert row.point
            if row.backend == Backend.REV_AD:
                assert row.func_evals == 1
            elif row.backend == Backend.ND:
                assert row.func_evals == 2 * row.dim

    def test_rev_ad_cheaper_than_nd(self):
        report = run_primitives(["gaus"], backends=(Backend.REV_AD, Backend.ND), timing=False)
        ops = {r.backend: r.scalar_ops for r in report.rows}
        assert ops[Backend.REV_AD] < ops[Backend.ND]

    def test_array_model_rejected(self):
        with pytest.raises(UnknownParameter):
            run_primitives(["mvn"], timing=False)


class TestCheck:

    def test_function_outside_corpus(self):
        func = parse("double f(double* v, double s, int n) { double t = 0.0; "
                     "for (int i = 0; i < n; i++) t += s * v[i] * v[i]; return t; }").get("f")
        points = sample_points(generic_entry(func, dim=4), 5, seed=0, dim=4)
        report = run_check(func, points)
        assert len(report.rows) == 10
        assert all(r.valid for r in report.rows)
        assert {r.dim for r in report.rows} == {5}


class TestReport:

    def test_rows_sorted_by_model_and_dim(self):
        rows = [
            BenchRow(model="sum", dim=64, backend=Backend.ND, scalar_ops=1, func_evals=128, max_abs_err=0.0),
            BenchRow(model="mvn", dim=5, backend=Backend.ND, scalar_ops=1, func_evals=10, max_abs_err=0.0),
            BenchRow(model="sum", dim=5, backend=Backend.REV_AD, scalar_ops=1, func_evals=1, max_abs_err=0.0),
            BenchRow(model="sum", dim=5, backend=Backend.ND, scalar_ops=1, func_evals=10, max_abs_err=0.0),
        ]
        report = BenchReport(kind="scaling", rows=rows)
        assert [(r.model, r.dim, r.backend) for r in report.rows] == [
            ("mvn", 5, Backend.ND), ("sum", 5, Backend.REV_AD), ("sum", 5, Backend.ND), ("sum", 64, Backend.ND),
        ]

    def test_repetitions_at_least_five(self):
        with pytest.raises(ValidationError):
            BenchReport(kind="scaling", repetitions=3)

    def test_csv_and_json_match_the_schema(self):
        report = run_scaling("sum", [5, 64, 512], timing=False)
        rows = list(csv.DictReader(io.StringIO(report.to_csv())))
        assert len(rows) == 6
        assert tuple(rows[0]) == BenchRow.CSV_FIELDS
        assert rows[0]["median_ns"] == ""
        assert BenchReport.model_validate(json.loads(report.to_json())) == report

    def test_speedups(self):
        rows = [
            BenchRow(model="sum", dim=5, backend=Backend.REV_AD, median_ns=100.0, scalar_ops=1, func_evals=1, max_abs_err=0.0),
            BenchRow(model="sum", dim=5, backend=Backend.ND, median_ns=400.0, scalar_ops=1, func_evals=10, max_abs_err=0.0),
        ]
        assert BenchReport(kind="scaling", rows=rows).speedups("sum") == {5: 4.0}


@pytest.mark.slow
class TestWallClockScaling:

    def test_sum_speedup_grows(self):
        speedups = run_scaling("sum", [5, 64, 512, 4096]).speedups("sum")
        values = [speedups[d] for d in (5, 64, 512, 4096)]
        assert values == sorted(values)
        assert speedups[4096] >= 4096 / 16

    def test_mvn_speedup_grows(self):
        speedups = run_scaling("mvn", [5, 64, 512, 4096]).speedups("mvn")
        values = [speedups[d] for d in (5, 64, 512, 4096)]
        assert values == sorted(values)
