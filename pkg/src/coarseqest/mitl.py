"""Metric interval temporal logic over piecewise-constant trajectories.

Formulae are parsed into a small AST, then compiled against a species
ordering into a flat program that the simulation backends evaluate
exactly (event-based, no sampling grid).  The only temporal primitive
is the time-bounded until; eventually and always are kept as native
node kinds with the standard derived semantics.

Semantic conventions (trajectories are right-continuous step functions):
until's witness interval is closed, ``U[a,b](f, g)`` holds at t iff
there is t' in [t+a, t+b] with g at t' and f everywhere on [t, t').
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np


class FormulaError(ValueError):
    """Base class for formula problems."""


class FormulaSyntaxError(FormulaError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class MalformedIntervalError(FormulaError):
    """Temporal interval violating 0 <= T1 <= T2 < inf."""


class FormulaBindingError(FormulaError):
    """A name in an atom is neither a species nor a known constant."""


class HorizonError(FormulaError):
    """The formula's time window does not fit in the trajectory."""


# --- arithmetic expressions inside atoms ---------------------------------


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * /
    left: object
    right: object


@dataclass(frozen=True)
class Neg:
    child: object


# --- formula AST ----------------------------------------------------------


@dataclass(frozen=True)
class TrueFormula:
    pass


@dataclass(frozen=True)
class Atom:
    left: object
    op: str  # < <= > >=
    right: object


@dataclass(frozen=True)
class Not:
    child: object


@dataclass(frozen=True)
class And:
    left: object
    right: object


def _check_interval(t1: float, t2: float):
    if not (0 <= t1 <= t2 < math.inf):
        raise MalformedIntervalError(f"interval [{t1}, {t2}] violates 0 <= T1 <= T2 < inf")


@dataclass(frozen=True)
class Until:
    left: object
    right: object
    t1: float
    t2: float

    def __post_init__(self):
        _check_interval(self.t1, self.t2)


@dataclass(frozen=True)
class Eventually:
    child: object
    t1: float
    t2: float

    def __post_init__(self):
        _check_interval(self.t1, self.t2)


@dataclass(frozen=True)
class Always:
    child: object
    t1: float
    t2: float

    def __post_init__(self):
        _check_interval(self.t1, self.t2)


def window_depth(formula) -> float:
    """Deepest nested time bound: evaluation at t needs the trajectory on [t, t+depth]."""
    if isinstance(formula, (TrueFormula, Atom)):
        return 0.0
    if isinstance(formula, Not):
        return window_depth(formula.child)
    if isinstance(formula, And):
        return max(window_depth(formula.left), window_depth(formula.right))
    if isinstance(formula, Until):
        return formula.t2 + max(window_depth(formula.left), window_depth(formula.right))
    if isinstance(formula, (Eventually, Always)):
        return formula.t2 + window_depth(formula.child)
    raise TypeError(f"not a formula: {formula!r}")


@dataclass(frozen=True)
class FormulaSet:
    """Ordered formulae; the order defines truth-pattern bit positions.

    Bit i of a pattern index is the truth value of formula i (the first
    formula is the least significant bit).
    """

    formulas: tuple
    names: tuple

    def __post_init__(self):
        if len(self.formulas) < 1:
            raise FormulaError("a formula set needs at least one formula")
        if len(self.names) != len(self.formulas):
            raise FormulaError("names/formulas length mismatch")
        if len(set(self.names)) != len(self.names):
            raise FormulaError("duplicate formula names")

    def __len__(self) -> int:
        return len(self.formulas)

    @property
    def pattern_count(self) -> int:
        return 1 << len(self.formulas)

    @property
    def required_horizon(self) -> float:
        return max(window_depth(f) for f in self.formulas)


# --- parser ----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op><=|>=|<|>|\(|\)|\[|\]|,|&|!|\+|-|\*|/))"
)

_CMP_OPS = ("<", "<=", ">", ">=")
_ARITH_OPS = ("+", "-", "*", "/")


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            at = len(text) - len(stripped)
            raise FormulaSyntaxError(f"unexpected character {text[at]!r}", at)
        if m.lastgroup == "num":
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.lastgroup == "name":
            tokens.append(("name", m.group("name"), m.start("name")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, value, pos = self.next()
        if kind != "op" or value != op:
            raise FormulaSyntaxError(f"expected {op!r}, found {value or 'end of input'!r}", pos)

    def at_op(self, op: str) -> bool:
        kind, value, _ = self.peek()
        return kind == "op" and value == op

    def parse(self):
        formula = self.parse_until()
        kind, value, pos = self.peek()
        if kind != "eof":
            raise FormulaSyntaxError(f"unexpected trailing input {value!r}", pos)
        return formula

    def parse_until(self):
        left = self.parse_and()
        kind, value, _ = self.peek()
        if kind == "name" and value == "U" and self.tokens[self.i + 1][:2] == ("op", "["):
            self.next()
            t1, t2 = self.parse_interval()
            right = self.parse_until()  # right-associative
            return Until(left, right, t1, t2)
        return left

    def parse_and(self):
        left = self.parse_unary()
        while self.at_op("&"):
            self.next()
            left = And(left, self.parse_unary())
        return left

    def parse_unary(self):
        kind, value, _ = self.peek()
        if kind == "op" and value == "!":
            self.next()
            return Not(self.parse_unary())
        if kind == "name" and value in ("F", "G") and self.tokens[self.i + 1][:2] == ("op", "["):
            self.next()
            t1, t2 = self.parse_interval()
            child = self.parse_unary()
            return Eventually(child, t1, t2) if value == "F" else Always(child, t1, t2)
        return self.parse_primary()

    def parse_interval(self):
        self.expect_op("[")
        t1 = self.parse_number()
        self.expect_op(",")
        t2 = self.parse_number()
        self.expect_op("]")
        _check_interval(t1, t2)
        return t1, t2

    def parse_number(self) -> float:
        kind, value, pos = self.next()
        neg = False
        if kind == "op" and value == "-":
            neg = True
            kind, value, pos = self.next()
        if kind != "num":
            raise FormulaSyntaxError(f"expected a number, found {value!r}", pos)
        num = float(value)
        return -num if neg else num

    def parse_primary(self):
        kind, value, pos = self.peek()
        if kind == "name" and value == "tt":
            self.next()
            return TrueFormula()
        if kind == "op" and value == "(":
            # '(' is ambiguous: parenthesized subformula or arithmetic grouping.
            save = self.i
            try:
                self.next()
                inner = self.parse_until()
                self.expect_op(")")
                nk, nv, _ = self.peek()
                if not (nk == "op" and nv in _CMP_OPS + _ARITH_OPS):
                    return inner
            except MalformedIntervalError:
                raise
            except FormulaSyntaxError:
                pass
            self.i = save
        if kind == "eof":
            raise FormulaSyntaxError("unexpected end of input", pos)
        return self.parse_comparison()

    def parse_comparison(self):
        left = self.parse_arith()
        kind, value, pos = self.next()
        if kind != "op" or value not in _CMP_OPS:
            raise FormulaSyntaxError(f"expected a comparison operator, found {value!r}", pos)
        right = self.parse_arith()
        return Atom(left, value, right)

    def parse_arith(self):
        left = self.parse_term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in ("+", "-"):
                self.next()
                left = BinOp(value, left, self.parse_term())
            else:
                return left

    def parse_term(self):
        left = self.parse_factor()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in ("*", "/"):
                self.next()
                left = BinOp(value, left, self.parse_factor())
            else:
                return left

    def parse_factor(self):
        kind, value, pos = self.next()
        if kind == "num":
            return Const(float(value))
        if kind == "name":
            return Var(value)
        if kind == "op" and value == "(":
            inner = self.parse_arith()
            self.expect_op(")")
            return inner
        if kind == "op" and value == "-":
            child = self.parse_factor()
            if isinstance(child, Const):
                return Const(-child.value)
            return Neg(child)
        raise FormulaSyntaxError(f"expected a value, found {value or 'end of input'!r}", pos)


def parse_formula(text: str):
    """Parse the concrete formula syntax into an AST.

    Grammar: ``tt``, comparisons over species/constants arithmetic,
    ``!f``, ``f & f``, ``f U[a,b] f``, ``F[a,b] f``, ``G[a,b] f``,
    parentheses.
    """
    return _Parser(text).parse()


# --- compilation to the flat backend program -------------------------------

K_ATOM = 0
K_NOT = 1
K_AND = 2
K_UNTIL = 3
K_EVENTUALLY = 4
K_ALWAYS = 5
K_TRUE = 6

OP_CONST = 0
OP_SPECIES = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_NEG = 6

_CMP_CODE = {"<": 0, "<=": 1, ">": 2, ">=": 3}


@dataclass
class CompiledFormulaSet:
    """Flat program for a formula set bound to a species order and constants."""

    n_formulas: int
    names: tuple
    species: tuple
    constants: dict
    roots: np.ndarray
    node_kind: np.ndarray
    node_c0: np.ndarray
    node_c1: np.ndarray
    node_a: np.ndarray
    node_b: np.ndarray
    node_atom: np.ndarray
    node_needs_signal: np.ndarray
    node_factor: np.ndarray
    node_prefix: np.ndarray
    arena_units: int
    atom_ops: np.ndarray
    atom_iargs: np.ndarray
    atom_fargs: np.ndarray
    atom_offsets: np.ndarray
    atom_cmp: np.ndarray
    max_stack: int
    required_horizon: float

    @property
    def pattern_count(self) -> int:
        return 1 << self.n_formulas


class _Compiler:
    def __init__(self, species, constants):
        self.species = {name: i for i, name in enumerate(species)}
        self.constants = dict(constants)
        self.kind, self.c0, self.c1 = [], [], []
        self.a, self.b, self.atom = [], [], []
        self.atom_ops, self.atom_iargs, self.atom_fargs = [], [], []
        self.atom_offsets = [0]
        self.atom_cmp = []
        self.max_stack = 0

    def expr(self, node, depth: int) -> int:
        """Emit bytecode for one arithmetic expression, return max stack depth."""
        if isinstance(node, Const):
            self._emit(OP_CONST, 0, node.value)
            return depth + 1
        if isinstance(node, Var):
            if node.name in self.species:
                self._emit(OP_SPECIES, self.species[node.name], 0.0)
            elif node.name in self.constants:
                self._emit(OP_CONST, 0, float(self.constants[node.name]))
            else:
                raise FormulaBindingError(
                    f"{node.name!r} is neither a species nor a known constant"
                )
            return depth + 1
        if isinstance(node, Neg):
            d = self.expr(node.child, depth)
            self._emit(OP_NEG, 0, 0.0)
            return d
        if isinstance(node, BinOp):
            d1 = self.expr(node.left, depth)
            d2 = self.expr(node.right, depth + 1)
            self._emit({"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV}[node.op], 0, 0.0)
            return max(d1, d2)
        raise TypeError(f"not an arithmetic expression: {node!r}")

    def _emit(self, op, iarg, farg):
        self.atom_ops.append(op)
        self.atom_iargs.append(iarg)
        self.atom_fargs.append(farg)

    def _add_node(self, kind, c0=-1, c1=-1, a=0.0, b=0.0, atom=-1) -> int:
        self.kind.append(kind)
        self.c0.append(c0)
        self.c1.append(c1)
        self.a.append(a)
        self.b.append(b)
        self.atom.append(atom)
        return len(self.kind) - 1

    def formula(self, node) -> int:
        if isinstance(node, TrueFormula):
            return self._add_node(K_TRUE)
        if isinstance(node, Atom):
            d = max(self.expr(node.left, 0), self.expr(node.right, 1))
            self.max_stack = max(self.max_stack, d)
            self.atom_offsets.append(len(self.atom_ops))
            self.atom_cmp.append(_CMP_CODE[node.op])
            return self._add_node(K_ATOM, atom=len(self.atom_cmp) - 1)
        if isinstance(node, Not):
            return self._add_node(K_NOT, c0=self.formula(node.child))
        if isinstance(node, And):
            c0 = self.formula(node.left)
            c1 = self.formula(node.right)
            return self._add_node(K_AND, c0=c0, c1=c1)
        if isinstance(node, Until):
            c0 = self.formula(node.left)
            c1 = self.formula(node.right)
            return self._add_node(K_UNTIL, c0=c0, c1=c1, a=node.t1, b=node.t2)
        if isinstance(node, Eventually):
            return self._add_node(K_EVENTUALLY, c0=self.formula(node.child), a=node.t1, b=node.t2)
        if isinstance(node, Always):
            return self._add_node(K_ALWAYS, c0=self.formula(node.child), a=node.t1, b=node.t2)
        raise TypeError(f"not a formula: {node!r}")


def compile_formula_set(fset: FormulaSet, species, constants=None) -> CompiledFormulaSet:
    """Bind a formula set to a species ordering plus named constants.

    Species names shadow constants of the same name.  The result is the
    flat program shared by the pure and compiled evaluation backends.
    """
    comp = _Compiler(tuple(species), constants or {})
    roots = [comp.formula(f) for f in fset.formulas]

    n_nodes = len(comp.kind)
    needs_signal = np.ones(n_nodes, dtype=np.uint8)
    for r in roots:
        if comp.kind[r] not in (K_ATOM, K_TRUE):
            needs_signal[r] = 0

    # Worst-case breakpoint multiplier per node, in units of (segments + 2);
    # signal building never overflows an arena sized from these.
    factor = np.zeros(n_nodes, dtype=np.int64)
    for i in range(n_nodes):
        k = comp.kind[i]
        if k in (K_ATOM, K_TRUE):
            factor[i] = 1
        elif k == K_NOT:
            factor[i] = factor[comp.c0[i]]
        elif k == K_AND:
            factor[i] = factor[comp.c0[i]] + factor[comp.c1[i]] + 1
        elif k == K_UNTIL:
            factor[i] = 3 * (factor[comp.c0[i]] + factor[comp.c1[i]]) + 1
        else:  # eventually / always
            factor[i] = 2 * factor[comp.c0[i]] + 1

    prefix = np.full(n_nodes, -1, dtype=np.int64)
    units = 0
    for i in range(n_nodes):
        if needs_signal[i]:
            prefix[i] = units
            units += int(factor[i])

    return CompiledFormulaSet(
        n_formulas=len(fset),
        names=fset.names,
        species=tuple(species),
        constants=dict(constants or {}),
        roots=np.array(roots, dtype=np.int32),
        node_kind=np.array(comp.kind, dtype=np.int32),
        node_c0=np.array(comp.c0, dtype=np.int32),
        node_c1=np.array(comp.c1, dtype=np.int32),
        node_a=np.array(comp.a, dtype=np.float64),
        node_b=np.array(comp.b, dtype=np.float64),
        node_atom=np.array(comp.atom, dtype=np.int32),
        node_needs_signal=needs_signal,
        node_factor=factor,
        node_prefix=prefix,
        arena_units=units,
        atom_ops=np.array(comp.atom_ops, dtype=np.int32),
        atom_iargs=np.array(comp.atom_iargs, dtype=np.int32),
        atom_fargs=np.array(comp.atom_fargs, dtype=np.float64),
        atom_offsets=np.array(comp.atom_offsets, dtype=np.int32),
        atom_cmp=np.array(comp.atom_cmp, dtype=np.int32),
        max_stack=max(comp.max_stack, 1),
        required_horizon=fset.required_horizon,
    )


def network_constants(network, constants=None) -> dict:
    """User constants plus N bound to the network's conservation constant."""
    out = dict(constants or {})
    if network.conservation is not None:
        out["N"] = float(network.conservation)
    return out


def eval_formula(formula, trajectory, t: float = 0.0, constants=None) -> bool:
    """Boolean satisfaction of ``formula`` on ``trajectory`` at time t.

    Raises HorizonError when t plus the formula's window depth exceeds the
    trajectory horizon.
    """
    from coarseqest._backend import active_backend

    fset = FormulaSet((formula,), ("f0",))
    compiled = compile_formula_set(
        fset, trajectory.network.species, network_constants(trajectory.network, constants)
    )
    bits = active_backend().eval_at(
        compiled,
        trajectory.segment_times(),
        trajectory.segment_states(),
        trajectory.horizon,
        float(t),
    )
    return bool(bits[0])


def joint_pattern(fset: FormulaSet, trajectory, constants=None) -> int:
    """Pattern index packing each formula's truth at time 0 (formula i -> bit i)."""
    from coarseqest._backend import active_backend

    compiled = compile_formula_set(
        fset, trajectory.network.species, network_constants(trajectory.network, constants)
    )
    bits = active_backend().eval_at(
        compiled,
        trajectory.segment_times(),
        trajectory.segment_states(),
        trajectory.horizon,
        0.0,
    )
    pattern = 0
    for i, bit in enumerate(bits):
        if bit:
            pattern |= 1 << i
    return pattern
