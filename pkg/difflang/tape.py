"""LIFO tape used by reverse-mode generated code."""
from typing import Generic, List, TypeVar, Union

from difflang.errors import PopOnEmpty

T = TypeVar("T", int, float)


class Tape(Generic[T]):
    """Typed LIFO store; one instance per tape local of a generated body."""

    __slots__ = ("element", "elements")

    def __init__(self, element: type = float):
        self.element = element
        self.elements: List[T] = []

    def push(self, value: T) -> T:
        self.elements.append(value)
        return value

    def pop(self) -> T:
        if not self.elements:
            raise PopOnEmpty("pop on empty tape")
        return self.elements.pop()

    def __len__(self) -> int:
        return len(self.elements)

    def __repr__(self) -> str:
        return f"Tape<{self.element.__name__}>({self.elements!r})"


def tape_push(tape: Tape, value: Union[int, float]) -> Union[int, float]:
    """Push value and return it unchanged, so it can sit inside an expression."""
    return tape.push(value)


def tape_pop(tape: Tape) -> Union[int, float]:
    return tape.pop()
