import pytest

from difflang.errors import PopOnEmpty
from difflang.evaluator import Interpreter, call
from difflang.lang.parser import parse
from difflang.tape import Tape, tape_pop, tape_push


class TestTape:

    def test_lifo(self):
        tape = Tape(int)
        for v in range(5):
            tape.push(v)
        assert [tape.pop() for _ in range(5)] == [4, 3, 2, 1, 0]
        assert len(tape) == 0

    def test_interleaved_push_pop(self):
        tape = Tape(float)
        tape.push(1.0)
        tape.push(2.0)
        assert tape.pop() == 2.0
        tape.push(3.0)
        assert tape.pop() == 3.0
        assert tape.pop() == 1.0

    def test_pop_on_empty(self):
        tape = Tape(int)
        with pytest.raises(PopOnEmpty):
            tape.pop()
        tape.push(1)
        tape.pop()
        with pytest.raises(PopOnEmpty):
            tape.pop()

    def test_push_returns_value(self):
        tape = Tape(float)
        assert tape_push(tape, 2.5) == 2.5
        assert tape_pop(tape) == 2.5

    def test_repr(self):
        tape = Tape(int)
        tape.push(7)
        assert repr(tape) == "Tape<int>([7])"


class TestTapeInPrograms:

    def test_program_pops_in_reverse(self):
        source = """
        double f(double x) {
          tape<double> t;
          push(t, x);
          push(t, 2.0 * x);
          return pop(t) - pop(t);
        }
        """
        assert call(parse(source), "f", [3.0]) == 3.0

    def test_program_pop_on_empty(self):
        source = "double f(double x) { tape<int> t; return pop(t) + x; }"
        with pytest.raises(PopOnEmpty):
            call(parse(source), "f", [1.0])

    def test_tapes_are_fresh_per_call(self):
        source = """
        double f(int n) {
          tape<int> t;
          for (int i = 0; i < n; i++) push(t, i);
          double s = 0.0;
          for (int i = 0; i < n; i++) s = s * 10.0 + pop(t);
          return s;
        }
        """
        interp = Interpreter(parse(source))
        assert interp.call("f", [3]) == 210.0
        assert interp.call("f", [3]) == 210.0
        assert len(interp.last_tapes) == 1
        assert len(interp.last_tapes[0]) == 0
