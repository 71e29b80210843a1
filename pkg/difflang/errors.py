"""Exception hierarchy shared by every difflang module."""
from typing import Iterable, Optional


class DiffLangError(Exception):
    """Base error. Carries an optional source position for diagnostics."""

    severity = "error"

    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(message)
        self.message = message
        self.line = line
        self.col = col

    def diagnostic(self, filename: str = "<input>") -> str:
        return f"{filename}:{self.line}:{self.col}: {self.severity}: {self.message}"


# --- lang_core ---

class ParseError(DiffLangError):
    def __init__(self, message: str, line: int = 0, col: int = 0,
                 expected: Iterable[str] = ()):
        self.expected = tuple(expected)
        if self.expected:
            message = f"{message} (expected {', '.join(self.expected)})"
        super().__init__(message, line, col)


class TypeCheckError(DiffLangError):
    pass


class MissingReturnError(DiffLangError):
    pass


class ValidationError(DiffLangError):
    """Raised by parse when the program violates a FuncDef/Program invariant."""

    def __init__(self, diagnostics: list):
        self.diagnostics = list(diagnostics)
        first = self.diagnostics[0]
        super().__init__(first.message, first.line, first.col)

    def diagnostic(self, filename: str = "<input>") -> str:
        return "\n".join(d.render(filename) for d in self.diagnostics)


# --- evaluator ---

class EvalError(DiffLangError):
    pass


class ArityMismatch(EvalError):
    pass


class TypeMismatch(EvalError):
    pass


class IndexOutOfBounds(EvalError):
    pass


class UnboundName(EvalError):
    pass


class DomainError(EvalError):
    pass


class StepLimitExceeded(EvalError):
    pass


class PopOnEmpty(EvalError):
    pass


# --- transformations ---

class TransformError(DiffLangError):
    pass


class UnsupportedConstruct(TransformError):
    pass


class UnknownParameter(TransformError):
    pass


class NonScalarOutput(TransformError):
    pass


# --- corpus ---

class UnknownModel(DiffLangError):
    def __init__(self, name: str, known: Optional[Iterable[str]] = None):
        self.name = name
        message = f"unknown model '{name}'"
        if known:
            message += f" (known: {', '.join(sorted(known))})"
        super().__init__(message)
