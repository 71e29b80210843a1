import pytest

from difflang.errors import UnknownParameter, UnsupportedConstruct
from difflang.evaluator import EvalStats, Interpreter, call
from difflang.forward_mode import DiffRequest, derivative_name, differentiate, differentiate_source, forward_gradient
from difflang.lang.nodes import Decl, For, If, Program, Return, count_nodes
from difflang.lang.parser import parse
from difflang.models import get_model, load_function, reference_gradient, relative_close


def derive(source: str, fname: str, wrt: str):
    func = parse(source).get(fname)
    derived = differentiate(DiffRequest.from_text(func, wrt))
    return Program((func, derived.derivative)), derived.derivative.name


class TestForwardMode:

    def test_breitwigner_gamma_derivative_is_exactly_zero(self):
        program, name = derive(get_model("breitwigner_pdf").source, "breitwigner_pdf", "gamma")
        value = call(program, name, {"x": 1.0, "gamma": 2.0, "x0": 0.0})
        assert value == 0.0

    def test_breitwigner_gamma_derivative_off_the_zero(self):
        program, name = derive(get_model("breitwigner_pdf").source, "breitwigner_pdf", "gamma")
        point = {"x": 1.0, "gamma": 3.0, "x0": 0.0}
        expected = reference_gradient("breitwigner_pdf", point, ["gamma"])[0]
        assert call(program, name, point) == pytest.approx(expected, rel=1e-12)

    def test_names(self):
        func = load_function("sum")
        assert derivative_name(DiffRequest(func, "p", 2)) == "sum_dp_2"
        assert derivative_name(DiffRequest.from_text(load_function("gaus"), "mu")) == "gaus_dmu"

    def test_array_slot(self):
        program, name = derive(get_model("sum").source, "sum", "p[1]")
        assert call(program, name, {"p": [1.0, 2.0, 3.0], "dim": 3}) == 1.0
        # slot outside the loop range contributes nothing
        assert call(program, name, {"p": [1.0], "dim": 1}) == 0.0

    def test_source_reparses(self):
        text = differentiate_source(get_model("mvn").source, "mvn", "sigma")
        assert parse(text).get("mvn_dsigma") is not None

    def test_assigned_parameter_gets_a_shadow(self):
        source = "double f(double x, double y) { x = x * y; x += y; return x; }"
        program, name = derive(source, "f", "x")
        # f = x*y + y, df/dx = y
        assert call(program, name, [2.0, 5.0]) == 5.0
        program, name = derive(source, "f", "y")
        assert call(program, name, [2.0, 5.0]) == 3.0

    def test_compound_multiply_and_divide(self):
        source = "double f(double x) { double y = x; y *= x; y /= (x + 1.0); return y; }"
        program, name = derive(source, "f", "x")
        x = 2.0
        # d/dx x^2/(x+1) = (x^2 + 2x)/(x+1)^2
        assert call(program, name, [x]) == pytest.approx((x * x + 2 * x) / (x + 1) ** 2, rel=1e-14)

    def test_return_inside_branch(self):
        source = "double f(double x) { if (x > 0.0) { return x * x; } return -x; }"
        program, name = derive(source, "f", "x")
        assert call(program, name, [3.0]) == 6.0
        assert call(program, name, [-3.0]) == -1.0

    def test_pow_with_variable_exponent(self):
        source = "double f(double a, double b) { return pow(a, b); }"
        program, name = derive(source, "f", "b")
        assert call(program, name, [2.0, 3.0]) == pytest.approx(8.0 * 0.6931471805599453, rel=1e-14)

    def test_forward_gradient_matches_reference(self):
        point = {"x": [0.1, -0.2, 0.3], "p": [0.0, 0.5, -0.5], "sigma": 1.2, "dim": 3}
        stats = EvalStats()
        grad = forward_gradient(load_function("mvn"), ["x", "p", "sigma"], point, stats)
        reference = reference_gradient("mvn", point)
        assert len(grad) == 7
        assert all(relative_close(a, b, 1e-12) for a, b in zip(grad, reference))
        # one derivative evaluation per slot
        assert stats.func_evals == 7

    def test_derivative_keeps_original_signature(self):
        func = load_function("breitwigner_pdf")
        derived = differentiate(DiffRequest(func, "gamma")).derivative
        assert derived.params == func.params
        assert Interpreter(Program((derived,))).call(derived.name, {"x": 1.0, "gamma": 2.0}) == 0.0


class TestStructure:

    SOURCE = """
    double walk(double* a, double x, int n) {
      double acc = 0.0;
      for (int i = 0; i < n; i++) {
        if (a[i] > x) {
          acc += a[i] * x;
        } else {
          for (int j = 0; j < i; j++) acc -= a[j];
        }
      }
      if (acc < 0.0) return -acc;
      return acc;
    }
    """

    @pytest.mark.parametrize("wrt", ["x", "a[1]"])
    def test_control_flow_is_kept(self, wrt):
        func = parse(self.SOURCE).get("walk")
        derived = differentiate(DiffRequest.from_text(func, wrt)).derivative
        for kind in (For, If, Return):
            assert count_nodes(derived.body, kind) == count_nodes(func.body, kind)
        # one tangent per double local
        assert count_nodes(derived.body, Decl) == 2 * count_nodes(func.body, Decl)

    def test_straight_line_body_stays_straight(self):
        func = load_function("gaus")
        derived = differentiate(DiffRequest.from_text(func, "sigma")).derivative
        assert count_nodes(derived.body, For) == count_nodes(derived.body, If) == 0
        assert count_nodes(derived.body, Return) == 1


class TestForwardModeErrors:

    def test_unknown_parameter(self):
        with pytest.raises(UnknownParameter):
            differentiate(DiffRequest(load_function("gaus"), "nope"))

    def test_whole_array_needs_a_slot(self):
        with pytest.raises(UnknownParameter):
            differentiate(DiffRequest(load_function("sum"), "p"))

    def test_int_parameter(self):
        with pytest.raises(UnknownParameter):
            differentiate(DiffRequest.from_text(load_function("sum"), "dim"))

    def test_unreadable_target(self):
        with pytest.raises(UnknownParameter):
            DiffRequest.from_text(load_function("sum"), "p[")

    def test_array_element_assignment(self):
        func = parse("double f(double* a, double x) { a[0] = x; return a[0]; }").get("f")
        with pytest.raises(UnsupportedConstruct):
            differentiate(DiffRequest(func, "x"))

    def test_user_function_call(self):
        program = parse("double g(double x) { return x; }\ndouble f(double x) { return g(x); }")
        with pytest.raises(UnsupportedConstruct):
            differentiate(DiffRequest(program.get("f"), "x"))
