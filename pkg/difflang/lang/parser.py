"""Recursive-descent parser and type checker for difflang source text.

The grammar is documented in docs/grammar.md. Expressions are parsed by
precedence climbing; every expression node leaves the parser typed.
"""
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from common.utils.logging import setup_logging
from difflang.errors import (
    MissingReturnError,
    ParseError,
    TypeCheckError,
    ValidationError,
)
from difflang.lang.nodes import (
    BUILTINS,
    COMPARISON_OPS,
    COMPOUND_OPS,
    CONSTANTS,
    INTRINSICS,
    INT_MAX,
    Assign,
    Binary,
    Block,
    Call,
    Cast,
    CompoundAssign,
    Decl,
    Expr,
    ExprStmt,
    For,
    FuncDef,
    If,
    Index,
    Literal,
    Param,
    Program,
    Return,
    Stmt,
    Type,
    Unary,
    VarRef,
)

logger = setup_logging(__name__)

KEYWORDS = {"double", "int", "tape", "for", "if", "else", "return", "inline"}
# Namespaces written in transcribed C++ that carry no meaning here
DROPPED_NAMESPACES = {"std", "clad"}

TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<newline>\n)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<number>(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>::|\+\+|\+=|-=|\*=|/=|<=|>=|==|!=|[-+*/<>=(){}\[\],;])
    """,
    re.VERBOSE | re.DOTALL,
)

# Binary precedence levels, loosest first
PRECEDENCE = [("==", "!="), ("<", "<=", ">", ">="), ("+", "-"), ("*", "/")]


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(source: str) -> List[Token]:
    tokens: List[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(source):
        m = TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind, text = m.lastgroup, m.group()
        col = pos - line_start + 1
        if kind in ("number", "ident", "op"):
            if kind == "ident" and text in KEYWORDS:
                kind = "keyword"
            tokens.append(Token(kind, text, line, col))
        # comments may span lines
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = pos + text.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class Scope:
    """Lexical name -> Type frames used while type checking."""

    def __init__(self, parent: Optional["Scope"] = None):
        self.parent = parent
        self.names: Dict[str, Type] = {}

    def lookup(self, name: str) -> Optional[Type]:
        scope = self
        while scope is not None:
            if name in scope.names:
                return scope.names[name]
            scope = scope.parent
        return None

    def declare(self, name: str, t: Type, line: int, col: int) -> None:
        if name in self.names:
            raise TypeCheckError(f"'{name}' is already declared in this scope", line, col)
        self.names[name] = t


def promote(e: Expr, target: Type) -> Expr:
    """Convert e to target type using the usual arithmetic conversions."""
    if e.type == target:
        return e
    if e.type == Type.INT and target == Type.DOUBLE:
        if isinstance(e, Literal):
            return Literal(float(e.value), Type.DOUBLE, line=e.line, col=e.col)
        if isinstance(e, Unary):
            return Unary(e.op, promote(e.operand, target), target, line=e.line, col=e.col)
        return Cast(e, line=e.line, col=e.col)
    raise TypeCheckError(
        f"cannot use {e.type.value} expression where {target.value} is expected",
        e.line, e.col,
    )


def always_returns(body: Tuple[Stmt, ...]) -> bool:
    for s in body:
        if isinstance(s, Return):
            return True
        if isinstance(s, Block) and always_returns(s.body):
            return True
        if isinstance(s, If) and s.orelse is not None:
            if always_returns(s.then) and always_returns(s.orelse):
                return True
    return False


class Parser:
    def __init__(self, source: str):
        self.tokens = tokenize(source)
        self.pos = 0
        self.functions: Dict[str, FuncDef] = {}
        self.scope = Scope()

    # --- token helpers ---

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def at(self, *texts: str) -> bool:
        return self.tok.kind != "eof" and self.tok.text in texts

    def advance(self) -> Token:
        t = self.tok
        self.pos += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"unexpected {self.describe(self.tok)}", [repr(text)])
        return self.advance()

    def expect_ident(self) -> Token:
        if self.tok.kind != "ident":
            self.error(f"unexpected {self.describe(self.tok)}", ["identifier"])
        return self.advance()

    @staticmethod
    def describe(t: Token) -> str:
        return "end of input" if t.kind == "eof" else repr(t.text)

    def error(self, message: str, expected=()) -> None:
        raise ParseError(message, self.tok.line, self.tok.col, expected)

    def push_scope(self) -> None:
        self.scope = Scope(self.scope)

    def pop_scope(self) -> None:
        self.scope = self.scope.parent

    # --- top level ---

    def parse_program(self) -> Program:
        functions = []
        while self.tok.kind != "eof":
            func = self.parse_function()
            functions.append(func)
            self.functions.setdefault(func.name, func)
        return Program(tuple(functions))

    def parse_function(self) -> FuncDef:
        if self.at("inline"):
            self.advance()
        start = self.expect("double")
        name = self.expect_ident().text
        self.expect("(")
        self.push_scope()
        params: List[Param] = []
        if not self.at(")"):
            params.append(self.parse_param())
            while self.at(","):
                self.advance()
                params.append(self.parse_param())
        self.expect(")")
        for p in params:
            # duplicates are reported by validate
            self.scope.names.setdefault(p.name, p.type)
        body = self.parse_block()
        self.pop_scope()
        if not always_returns(body):
            raise MissingReturnError(
                f"function '{name}' does not return on every path", start.line, start.col
            )
        return FuncDef(name, tuple(params), body, line=start.line, col=start.col)

    def parse_type(self) -> Type:
        if self.at("double"):
            self.advance()
            if self.at("*"):
                self.advance()
                return Type.DOUBLE_ARRAY
            return Type.DOUBLE
        if self.at("int"):
            self.advance()
            return Type.INT
        if self.at("tape"):
            self.advance()
            self.expect("<")
            element = self.parse_type()
            self.expect(">")
            if element not in (Type.INT, Type.DOUBLE):
                self.error("tapes hold int or double values")
            return Type.tape_of(element)
        self.error(f"unexpected {self.describe(self.tok)}", ["type"])

    def parse_param(self) -> Param:
        t_tok = self.tok
        t = self.parse_type()
        if t.is_tape:
            raise TypeCheckError("tapes cannot be parameters", t_tok.line, t_tok.col)
        name = self.expect_ident()
        default = None
        if self.at("="):
            self.advance()
            negative = False
            if self.at("-"):
                self.advance()
                negative = True
            if self.tok.kind != "number":
                self.error(f"unexpected {self.describe(self.tok)}", ["number"])
            lit = self.number(self.advance())
            if negative:
                lit = Literal(-lit.value, lit.type, line=lit.line, col=lit.col)
            if t == Type.DOUBLE_ARRAY:
                raise TypeCheckError("array parameters cannot have defaults", name.line, name.col)
            default = promote(lit, t)
        return Param(name.text, t, default, line=name.line, col=name.col)

    # --- statements ---

    def parse_block(self) -> Tuple[Stmt, ...]:
        self.expect("{")
        self.push_scope()
        body = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                self.error("unexpected end of input", ["'}'"])
            body.append(self.parse_statement())
        self.advance()
        self.pop_scope()
        return tuple(body)

    def parse_body(self) -> Tuple[Stmt, ...]:
        """Loop or branch body: a braced block or a single statement."""
        if self.at("{"):
            return self.parse_block()
        self.push_scope()
        stmt = self.parse_statement()
        self.pop_scope()
        return (stmt,)

    def parse_statement(self) -> Stmt:
        t = self.tok
        if self.at("double", "int", "tape"):
            return self.parse_decl()
        if self.at("for"):
            return self.parse_for()
        if self.at("if"):
            return self.parse_if()
        if self.at("return"):
            self.advance()
            value = promote(self.parse_expr(), Type.DOUBLE)
            self.expect(";")
            return Return(value, line=t.line, col=t.col)
        if self.at("{"):
            return Block(self.parse_block(), line=t.line, col=t.col)
        if t.kind == "ident":
            if self.peek().text in ("(", "::"):
                expr = self.parse_expr()
                if not (isinstance(expr, Call) and expr.name == "push"):
                    raise TypeCheckError("only push(...) may be used as a statement", t.line, t.col)
                self.expect(";")
                return ExprStmt(expr, line=t.line, col=t.col)
            return self.parse_assignment(";")
        self.error(f"unexpected {self.describe(t)}", ["statement"])

    def parse_decl(self) -> Decl:
        t_tok = self.tok
        t = self.parse_type()
        name = self.expect_ident()
        if t == Type.DOUBLE_ARRAY:
            raise TypeCheckError("arrays can only be parameters", t_tok.line, t_tok.col)
        init = None
        if self.at("="):
            self.advance()
            if t.is_tape:
                # `tape<int> t = {};` as written in generated C++
                self.expect("{")
                self.expect("}")
            else:
                init = promote(self.parse_expr(), t)
        self.expect(";")
        self.scope.declare(name.text, t, name.line, name.col)
        return Decl(name.text, t, init, line=name.line, col=name.col)

    def parse_lvalue(self):
        name = self.expect_ident()
        t = self.scope.lookup(name.text)
        if t is None:
            if name.text in CONSTANTS:
                raise TypeCheckError(f"cannot assign to constant '{name.text}'", name.line, name.col)
            raise TypeCheckError(f"undeclared name '{name.text}'", name.line, name.col)
        if self.at("["):
            return self.finish_index(name, t)
        if t not in (Type.INT, Type.DOUBLE):
            raise TypeCheckError(f"cannot assign to {t.value} '{name.text}'", name.line, name.col)
        return VarRef(name.text, t, line=name.line, col=name.col)

    def parse_assignment(self, terminator: str) -> Stmt:
        t = self.tok
        target = self.parse_lvalue()
        if self.at("="):
            self.advance()
            value = promote(self.parse_expr(), target.type)
            stmt = Assign(target, value, line=t.line, col=t.col)
        elif self.at(*COMPOUND_OPS):
            op = self.advance().text
            value = promote(self.parse_expr(), target.type)
            stmt = CompoundAssign(op, target, value, line=t.line, col=t.col)
        else:
            self.error(f"unexpected {self.describe(self.tok)}", ["'='"] + [repr(o) for o in COMPOUND_OPS])
        self.expect(terminator)
        return stmt

    def parse_for(self) -> For:
        t = self.advance()
        self.expect("(")
        self.push_scope()
        self.expect("int")
        counter = self.expect_ident()
        self.expect("=")
        start = promote(self.parse_expr(), Type.INT)
        self.expect(";")
        self.scope.declare(counter.text, Type.INT, counter.line, counter.col)
        cond = self.parse_expr()
        if cond.type != Type.INT:
            raise TypeCheckError("loop condition must be int", cond.line, cond.col)
        self.expect(";")
        step = self.expect_ident()
        if step.text != counter.text:
            raise ParseError(f"loop must step its counter '{counter.text}'", step.line, step.col)
        if self.at("++"):
            self.advance()
        else:
            self.expect("+=")
            one = self.tok
            if one.text != "1":
                self.error("loop step must be 1", ["'1'"])
            self.advance()
        self.expect(")")
        body = self.parse_body()
        self.pop_scope()
        return For(counter.text, start, cond, body, line=t.line, col=t.col)

    def parse_if(self) -> If:
        t = self.advance()
        self.expect("(")
        cond = self.parse_expr()
        if cond.type != Type.INT:
            raise TypeCheckError("condition must be int", cond.line, cond.col)
        self.expect(")")
        then = self.parse_body()
        orelse = None
        if self.at("else"):
            self.advance()
            orelse = self.parse_body()
        return If(cond, then, orelse, line=t.line, col=t.col)

    # --- expressions ---

    def parse_expr(self, level: int = 0) -> Expr:
        if level == len(PRECEDENCE):
            return self.parse_unary()
        lhs = self.parse_expr(level + 1)
        while self.at(*PRECEDENCE[level]):
            op_tok = self.advance()
            rhs = self.parse_expr(level + 1)
            lhs = self.binary(op_tok, lhs, rhs)
        return lhs

    def binary(self, op_tok: Token, lhs: Expr, rhs: Expr) -> Binary:
        op = op_tok.text
        for side in (lhs, rhs):
            if side.type not in (Type.INT, Type.DOUBLE):
                raise TypeCheckError(f"operator '{op}' needs scalar operands", side.line, side.col)
        operand_type = Type.DOUBLE if Type.DOUBLE in (lhs.type, rhs.type) else Type.INT
        lhs, rhs = promote(lhs, operand_type), promote(rhs, operand_type)
        result = Type.INT if op in COMPARISON_OPS else operand_type
        return Binary(op, lhs, rhs, result, line=op_tok.line, col=op_tok.col)

    def parse_unary(self) -> Expr:
        t = self.tok
        if self.at("-"):
            self.advance()
            operand = self.parse_unary()
            if operand.type not in (Type.INT, Type.DOUBLE):
                raise TypeCheckError("unary '-' needs a scalar operand", t.line, t.col)
            return Unary("-", operand, operand.type, line=t.line, col=t.col)
        if self.at("+"):
            self.advance()
            return self.parse_unary()
        if self.at("(") and self.peek().text == "double" and self.peek(2).text == ")":
            self.pos += 3
            operand = self.parse_unary()
            if operand.type == Type.DOUBLE:
                return operand
            if operand.type != Type.INT:
                raise TypeCheckError("only int values can be cast to double", t.line, t.col)
            return Cast(operand, line=t.line, col=t.col)
        return self.parse_primary()

    @staticmethod
    def number(t: Token) -> Literal:
        if re.fullmatch(r"\d+", t.text):
            if int(t.text) > INT_MAX:
                raise ParseError(f"integer literal {t.text} does not fit in int", t.line, t.col)
            return Literal(int(t.text), Type.INT, line=t.line, col=t.col)
        return Literal(float(t.text), Type.DOUBLE, line=t.line, col=t.col)

    def parse_primary(self) -> Expr:
        t = self.tok
        if t.kind == "number":
            return self.number(self.advance())
        if self.at("("):
            self.advance()
            e = self.parse_expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            name = self.advance()
            if self.at("::"):
                if name.text not in DROPPED_NAMESPACES:
                    raise ParseError(f"unknown namespace '{name.text}'", name.line, name.col)
                self.advance()
                name = self.expect_ident()
            if self.at("("):
                return self.finish_call(name)
            vtype = self.scope.lookup(name.text)
            if self.at("["):
                if vtype is None:
                    raise TypeCheckError(f"undeclared name '{name.text}'", name.line, name.col)
                return self.finish_index(name, vtype)
            if vtype is None:
                if name.text in CONSTANTS:
                    return VarRef(name.text, Type.DOUBLE, line=name.line, col=name.col)
                raise TypeCheckError(f"undeclared name '{name.text}'", name.line, name.col)
            return VarRef(name.text, vtype, line=name.line, col=name.col)
        self.error(f"unexpected {self.describe(t)}", ["expression"])

    def finish_index(self, name: Token, vtype: Type) -> Index:
        if vtype != Type.DOUBLE_ARRAY:
            raise TypeCheckError(f"'{name.text}' is not an array", name.line, name.col)
        self.expect("[")
        index = self.parse_expr()
        if index.type != Type.INT:
            raise TypeCheckError("array index must be int", index.line, index.col)
        self.expect("]")
        return Index(name.text, index, line=name.line, col=name.col)

    def finish_call(self, name: Token) -> Call:
        self.expect("(")
        args: List[Expr] = []
        if not self.at(")"):
            args.append(self.parse_expr())
            while self.at(","):
                self.advance()
                args.append(self.parse_expr())
        self.expect(")")
        fname = name.text
        pos = dict(line=name.line, col=name.col)

        if fname in INTRINSICS:
            if len(args) != INTRINSICS[fname]:
                raise TypeCheckError(
                    f"'{fname}' takes {INTRINSICS[fname]} argument(s), got {len(args)}", **pos
                )
            return Call(fname, tuple(promote(a, Type.DOUBLE) for a in args), Type.DOUBLE, **pos)

        if fname in BUILTINS:
            if len(args) != BUILTINS[fname]:
                raise TypeCheckError(
                    f"'{fname}' takes {BUILTINS[fname]} argument(s), got {len(args)}", **pos
                )
            head = args[0]
            if fname == "len":
                if not (isinstance(head, VarRef) and head.type == Type.DOUBLE_ARRAY):
                    raise TypeCheckError("len() takes an array parameter", **pos)
                return Call(fname, (head,), Type.INT, **pos)
            if not (isinstance(head, VarRef) and head.type.is_tape):
                raise TypeCheckError(f"{fname}() takes a tape as first argument", **pos)
            element = head.type.element
            if fname == "pop":
                return Call(fname, (head,), element, **pos)
            return Call(fname, (head, promote(args[1], element)), element, **pos)

        callee = self.functions.get(fname)
        if callee is not None and len(callee.params) >= len(args):
            args = [
                promote(a, p.type) if p.type == Type.DOUBLE else a
                for a, p in zip(args, callee.params)
            ]
        # unknown callees are reported by validate
        return Call(fname, tuple(args), Type.DOUBLE, **pos)


def parse(source: str, *, validate: bool = True) -> Program:
    """Parse and type-check source text into a Program.

    Raises ParseError, TypeCheckError or MissingReturnError with a source
    position. With validate=True (the default) FuncDef/Program invariants are
    checked too and violations raise ValidationError.
    """
    try:
        program = Parser(source).parse_program()
    except (ParseError, TypeCheckError, MissingReturnError) as e:
        logger.debug(f"Parse failed at {e.line}:{e.col}: {e.message}")
        raise
    if validate:
        from difflang.lang.validate import validate as run_validate

        diagnostics = run_validate(program)
        if diagnostics:
            raise ValidationError(diagnostics)
    logger.debug(f"Parsed program with {len(program.functions)} function(s)")
    return program
