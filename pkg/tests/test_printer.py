from difflang.lang.nodes import Binary, Literal, Type, VarRef
from difflang.lang.parser import parse
from difflang.lang.printer import format_expr, format_literal, print_function, print_program
from difflang.models import MODEL_NAMES, get_model


class TestPrinter:

    def test_round_trip_corpus(self):
        for name in list(MODEL_NAMES) + ["gaus_mix3"]:
            program = parse(get_model(name).source)
            assert parse(print_program(program)) == program

    def test_printing_is_idempotent(self):
        for name in MODEL_NAMES:
            text = print_program(parse(get_model(name).source))
            assert print_program(parse(text)) == text

    def test_right_operand_keeps_parentheses(self):
        a, b, c = (VarRef(n, Type.DOUBLE) for n in "abc")
        assert format_expr(Binary("-", a, Binary("-", b, c, Type.DOUBLE), Type.DOUBLE)) == "a - (b - c)"
        assert format_expr(Binary("-", Binary("-", a, b, Type.DOUBLE), c, Type.DOUBLE)) == "a - b - c"

    def test_double_literals_keep_a_point(self):
        assert format_literal(Literal(1.0, Type.DOUBLE)) == "1.0"
        assert format_literal(Literal(1e-20, Type.DOUBLE)) == "1e-20"
        assert format_literal(Literal(3, Type.INT)) == "3"

    def test_cast_and_tape_syntax(self):
        source = """
        double f(int n) {
          tape<int> t;
          push(t, n);
          return (double)pop(t) / 2.0;
        }
        """
        text = print_function(parse(source).get("f"))
        assert "tape<int> t;" in text
        assert "push(t, n);" in text
        assert "(double)pop(t) / 2.0" in text
        assert parse(text) == parse(source)
