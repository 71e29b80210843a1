from difflang.lang.nodes import Program, FuncDef, Type
from difflang.lang.parser import parse
from difflang.lang.printer import print_program, print_function
from difflang.lang.validate import validate, Diagnostic

__all__ = [
    "Diagnostic",
    "FuncDef",
    "Program",
    "Type",
    "parse",
    "print_function",
    "print_program",
    "validate",
]
