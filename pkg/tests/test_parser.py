import pytest

from difflang.errors import MissingReturnError, ParseError, TypeCheckError, ValidationError
from difflang.lang.nodes import Binary, Call, Cast, Literal, Return, Type, Unary, VarRef
from difflang.lang.parser import parse, tokenize
from difflang.lang.validate import validate
from difflang.models import MODEL_NAMES, get_model


class TestParser:

    def test_parses_every_corpus_model(self):
        for name in MODEL_NAMES:
            program = parse(get_model(name).source)
            assert program.get(name) is not None

    def test_int_operand_promoted_in_double_context(self):
        func = parse("double f(int n) { return n / 2.0; }").get("f")
        ret = func.body[0]
        assert isinstance(ret, Return)
        assert ret.value == Binary("/", Cast(VarRef("n", Type.INT)), Literal(2.0, Type.DOUBLE), Type.DOUBLE)

    def test_int_literal_becomes_double_literal(self):
        ret = parse("double f(double x) { return 2 * x; }").get("f").body[0]
        assert ret.value.lhs == Literal(2.0, Type.DOUBLE)

    def test_negated_int_is_promoted_inside_unary(self):
        ret = parse("double f(int n) { return -n / 2.0; }").get("f").body[0]
        assert ret.value.lhs == Unary("-", Cast(VarRef("n", Type.INT)), Type.DOUBLE)

    def test_namespaces_inline_and_comments_are_dropped(self):
        source = """
        // leading comment
        inline double f(double x /* the input */) {
          return std::exp(x) + clad::sin(x);
        }
        """
        ret = parse(source).get("f").body[0]
        assert isinstance(ret.value.lhs, Call) and ret.value.lhs.name == "exp"
        assert ret.value.rhs.name == "sin"

    def test_default_parameter(self):
        func = parse(get_model("breitwigner_pdf").source).get("breitwigner_pdf")
        assert func.param("x0").default == Literal(0.0, Type.DOUBLE)

    def test_structural_equality_ignores_positions(self):
        a = parse("double f(double x) { return x * x; }")
        b = parse("double f(double x)\n{\n  return x*x;\n}\n")
        assert a == b
        assert hash(a) == hash(b)

    def test_tape_locals_and_builtins(self):
        source = """
        double f(double* a, double x) {
          tape<double> t = {};
          push(t, x);
          double y = pop(t) + len(a);
          return y;
        }
        """
        func = parse(source).get("f")
        assert func.body[0].type == Type.DOUBLE_TAPE

    def test_tokenizer_tracks_lines_through_comments(self):
        tokens = tokenize("/* a\nb */ double")
        assert tokens[0].text == "double"
        assert tokens[0].line == 2


class TestParseErrors:

    def test_syntax_error_has_position(self):
        with pytest.raises(ParseError) as exc:
            parse("double f(double x) {\n  return x +;\n}")
        assert exc.value.line == 2
        assert exc.value.col > 0
        assert exc.value.diagnostic("f.dl").startswith("f.dl:2:")

    def test_unexpected_character(self):
        with pytest.raises(ParseError):
            parse("double f(double x) { return x @ 2; }")

    def test_missing_return(self):
        with pytest.raises(MissingReturnError):
            parse("double f(double x) { double y = x; }")

    def test_if_without_else_does_not_always_return(self):
        with pytest.raises(MissingReturnError):
            parse("double f(double x) { if (x > 0.0) { return x; } }")

    def test_undeclared_name(self):
        with pytest.raises(TypeCheckError):
            parse("double f(double x) { return y; }")

    def test_double_index_rejected(self):
        with pytest.raises(TypeCheckError):
            parse("double f(double* p, double x) { return p[x]; }")

    def test_redeclaration_in_same_scope(self):
        with pytest.raises(TypeCheckError):
            parse("double f(double x) { double y = 1.0; double y = 2.0; return y; }")

    def test_loop_step_must_be_one(self):
        with pytest.raises(ParseError):
            parse("double f(int n) { double s = 0.0; for (int i = 0; i < n; i += 2) s += 1.0; return s; }")

    def test_int_literal_must_fit_in_64_bits(self):
        assert parse("double f(double x) { int m = 9223372036854775807; return x * m; }")
        with pytest.raises(ParseError) as exc:
            parse("double f(double x) { int m = 9223372036854775808; return x * m; }")
        assert "does not fit" in exc.value.message

    def test_only_push_as_expression_statement(self):
        with pytest.raises(TypeCheckError):
            parse("double f(double x) { exp(x); return x; }")


class TestValidate:

    def test_corpus_is_clean(self):
        for name in MODEL_NAMES:
            assert validate(parse(get_model(name).source, validate=False)) == []

    def test_duplicate_function(self):
        source = "double f(double x) { return x; }\ndouble f(double x) { return 2.0 * x; }"
        with pytest.raises(ValidationError) as exc:
            parse(source)
        assert exc.value.diagnostics[0].code == "DuplicateFunction"

    def test_unknown_function(self):
        codes = [d.code for d in validate(parse("double f(double x) { return g(x); }", validate=False))]
        assert codes == ["UnknownFunction"]

    def test_counter_reassigned(self):
        source = "double f(int n) { double s = 0.0; for (int i = 0; i < n; i++) { i = 0; s += 1.0; } return s; }"
        codes = [d.code for d in validate(parse(source, validate=False))]
        assert "CounterReassigned" in codes

    def test_call_arity(self):
        source = "double g(double a, double b) { return a * b; }\ndouble f(double x) { return g(x); }"
        codes = [d.code for d in validate(parse(source, validate=False))]
        assert codes == ["CallArity"]

    def test_default_must_trail(self):
        codes = [d.code for d in validate(parse("double f(double a = 1, double b) { return a + b; }", validate=False))]
        assert "DefaultNotTrailing" in codes

    def test_validation_error_renders_every_diagnostic(self):
        source = "double f(double x) { return g(x) + h(x); }"
        with pytest.raises(ValidationError) as exc:
            parse(source)
        assert len(exc.value.diagnostic("m.dl").splitlines()) == 2
