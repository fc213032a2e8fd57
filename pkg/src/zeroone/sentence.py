"""Local sentences: syntax, parsing, decomposition and the index k(L).

Grammar (whitespace-insensitive)::

    sentence := clause | "!" sentence | sentence ("&&"|"||") sentence | "(" sentence ")"
    clause   := "EXIST" INT "BALL" "r=" INT body+
    body     := "{" formula "}"
    formula  := atom | "!" formula | formula ("&"|"|") formula | "(" formula ")"
    atom     := "C(" INT ("," INT)* ")"

Negation binds tightest, then conjunction, then disjunction; binary
operators associate to the left. Atoms name ball offsets, never vertices.
"""
from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np

from .configuration import LocalConfiguration, codes_to_bits
from .torus import BallTemplate, TorusParams, ball_template, torus_distance

DEFAULT_ENUMERATION_CAP = 25
INFINITY = math.inf


class SentenceSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class SentenceSemanticError(ValueError):
    pass


class EnumerationCapError(RuntimeError):
    """Raised when a ball has more colorings than the enumeration cap allows."""


# AST -----------------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    offset: tuple


@dataclass(frozen=True)
class Not:
    child: "Node"


@dataclass(frozen=True)
class And:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Or:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class LocalFormula:
    radius: int
    tree: "Node"

    def atoms(self) -> Iterator[Atom]:
        return _atoms(self.tree)


@dataclass(frozen=True)
class BasicLocalSentence:
    """``m`` witnesses at pairwise distance ``> 2r``, witness ``i`` satisfying ``psis[i]``."""

    m: int
    r: int
    psis: tuple

    def __post_init__(self):
        object.__setattr__(self, "psis", tuple(self.psis))
        if self.m < 1:
            raise SentenceSemanticError("a basic local sentence needs m >= 1 witnesses")
        if len(self.psis) != self.m:
            raise SentenceSemanticError(
                f"EXIST {self.m} needs {self.m} bodies, got {len(self.psis)}"
            )
        if any(psi.radius != self.r for psi in self.psis):
            raise SentenceSemanticError("mixed radii in one basic local sentence")


Node = Union[Atom, Not, And, Or, BasicLocalSentence]


def _atoms(node) -> Iterator[Atom]:
    if isinstance(node, Atom):
        yield node
    elif isinstance(node, Not):
        yield from _atoms(node.child)
    elif isinstance(node, (And, Or)):
        yield from _atoms(node.left)
        yield from _atoms(node.right)
    else:
        raise TypeError(f"not a formula node: {node!r}")


def leaves(sentence) -> list:
    """Basic local sentences of a boolean combination, left to right."""
    if isinstance(sentence, BasicLocalSentence):
        return [sentence]
    if isinstance(sentence, Not):
        return leaves(sentence.child)
    if isinstance(sentence, (And, Or)):
        return leaves(sentence.left) + leaves(sentence.right)
    raise TypeError(f"not a sentence node: {sentence!r}")


def exists(psi: Union[LocalFormula, Node], r: int | None = None, m: int = 1) -> BasicLocalSentence:
    """Shorthand for ``EXIST m BALL r=.. {psi}...`` with ``m`` copies of ``psi``."""
    if not isinstance(psi, LocalFormula):
        psi = LocalFormula(r if r is not None else 0, psi)
    return BasicLocalSentence(m, psi.radius, (psi,) * m)


def description_formula(desc: LocalConfiguration) -> LocalFormula:
    """The conjunction of literals expressed by a complete description."""
    tree = None
    for off, color in zip(desc.template.offsets, desc.colors):
        lit = Atom(off) if color else Not(Atom(off))
        tree = lit if tree is None else And(tree, lit)
    return LocalFormula(desc.radius, tree)


# tokenizer / parser -----------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<int>[-+]?\d+)
  | (?P<op>&&|\|\||r\s*=|[!&|(){},]|EXIST|BALL|C)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise SentenceSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        value = match.group()
        col = pos - line_start + 1
        if match.lastgroup == "int":
            tokens.append(_Token("INT", value, line, col))
        elif match.lastgroup == "op":
            kind = "r=" if value.startswith("r") else value
            tokens.append(_Token(kind, value, line, col))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rfind("\n") + 1
        pos = match.end()
    tokens.append(_Token("EOF", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def peek(self) -> _Token:
        return self.tokens[self.i]

    def take(self, kind: str | None = None) -> _Token:
        tok = self.peek
        if kind is not None and tok.kind != kind:
            found = "end of input" if tok.kind == "EOF" else repr(tok.text)
            raise SentenceSyntaxError(f"expected {kind!r}, found {found}", tok.line, tok.column)
        self.i += 1
        return tok

    def integer(self) -> int:
        return int(self.take("INT").text)

    # sentence level
    def sentence(self):
        node = self.conjunction()
        while self.peek.kind == "||":
            self.take()
            node = Or(node, self.conjunction())
        return node

    def conjunction(self):
        node = self.negation()
        while self.peek.kind == "&&":
            self.take()
            node = And(node, self.negation())
        return node

    def negation(self):
        tok = self.peek
        if tok.kind == "!":
            self.take()
            return Not(self.negation())
        if tok.kind == "(":
            self.take()
            node = self.sentence()
            self.take(")")
            return node
        if tok.kind == "EXIST":
            return self.clause()
        raise SentenceSyntaxError(f"expected a sentence, found {tok.text or 'end of input'!r}", tok.line, tok.column)

    def clause(self) -> BasicLocalSentence:
        start = self.take("EXIST")
        m = self.integer()
        self.take("BALL")
        self.take("r=")
        r = self.integer()
        if m < 1 or r < 0:
            raise SentenceSyntaxError("EXIST needs m >= 1 and r >= 0", start.line, start.column)
        bodies = []
        while self.peek.kind == "{":
            self.take()
            bodies.append(LocalFormula(r, self.formula()))
            self.take("}")
        if len(bodies) != m:
            raise SentenceSyntaxError(
                f"EXIST {m} needs {m} bodies, got {len(bodies)}", start.line, start.column
            )
        return BasicLocalSentence(m, r, tuple(bodies))

    # formula level
    def formula(self):
        node = self.formula_and()
        while self.peek.kind == "|":
            self.take()
            node = Or(node, self.formula_and())
        return node

    def formula_and(self):
        node = self.formula_not()
        while self.peek.kind == "&":
            self.take()
            node = And(node, self.formula_not())
        return node

    def formula_not(self):
        tok = self.peek
        if tok.kind == "!":
            self.take()
            return Not(self.formula_not())
        if tok.kind == "(":
            self.take()
            node = self.formula()
            self.take(")")
            return node
        if tok.kind == "C":
            self.take()
            self.take("(")
            coords = [self.integer()]
            while self.peek.kind == ",":
                self.take()
                coords.append(self.integer())
            self.take(")")
            return Atom(tuple(coords))
        raise SentenceSyntaxError(f"expected a formula, found {tok.text or 'end of input'!r}", tok.line, tok.column)


def parse_sentence(text: str, params: TorusParams | None = None):
    """Parse DSL text into a sentence AST.

    Without ``params`` only syntax and offset-arity consistency are
    checked; with them every atom must lie in the ball of its clause.
    """
    parser = _Parser(text)
    ast = parser.sentence()
    tok = parser.peek
    if tok.kind != "EOF":
        raise SentenceSyntaxError(f"unexpected {tok.text!r} after sentence", tok.line, tok.column)
    infer_dimension(ast)
    if params is not None:
        validate(ast, params)
    return ast


def parse_formula(text: str, r: int) -> LocalFormula:
    parser = _Parser(text)
    tree = parser.formula()
    tok = parser.peek
    if tok.kind != "EOF":
        raise SentenceSyntaxError(f"unexpected {tok.text!r} after formula", tok.line, tok.column)
    return LocalFormula(r, tree)


def infer_dimension(sentence) -> int | None:
    arities = {len(a.offset) for leaf in leaves(sentence) for psi in leaf.psis for a in psi.atoms()}
    if len(arities) > 1:
        raise SentenceSemanticError(f"atoms mix offset arities {sorted(arities)}")
    return arities.pop() if arities else None


def validate(sentence, params: TorusParams) -> None:
    for leaf in leaves(sentence):
        if any(psi.radius != leaf.r for psi in leaf.psis):
            raise SentenceSemanticError("mixed radii in one basic local sentence")
        template = ball_template(params, leaf.r)
        for psi in leaf.psis:
            check_formula(psi, template)


def check_formula(psi: LocalFormula, template: BallTemplate) -> None:
    for atom in psi.atoms():
        if len(atom.offset) != template.d:
            raise SentenceSemanticError(
                f"offset arity {len(atom.offset)} of C{atom.offset} does not match d={template.d}"
            )
        if atom.offset not in template:
            raise SentenceSemanticError(f"atom offset outside B(0,r): C{atom.offset} with r={psi.radius}")


# printing ------------------------------------------------------------------

def format_formula(node) -> str:
    if isinstance(node, LocalFormula):
        node = node.tree
    if isinstance(node, Atom):
        return "C(" + ",".join(str(c) for c in node.offset) + ")"
    if isinstance(node, Not):
        return "!" + _wrap(node.child, format_formula)
    if isinstance(node, And):
        return f"{_wrap(node.left, format_formula)} & {_wrap(node.right, format_formula)}"
    if isinstance(node, Or):
        return f"{_wrap(node.left, format_formula)} | {_wrap(node.right, format_formula)}"
    raise TypeError(f"not a formula node: {node!r}")


def format_sentence(node) -> str:
    """Canonical text; ``parse_sentence(format_sentence(ast)) == ast``."""
    if isinstance(node, BasicLocalSentence):
        bodies = " ".join("{ " + format_formula(psi) + " }" for psi in node.psis)
        return f"EXIST {node.m} BALL r={node.r} {bodies}"
    if isinstance(node, Not):
        return "!" + _wrap(node.child, format_sentence)
    if isinstance(node, And):
        return f"{_wrap(node.left, format_sentence)} && {_wrap(node.right, format_sentence)}"
    if isinstance(node, Or):
        return f"{_wrap(node.left, format_sentence)} || {_wrap(node.right, format_sentence)}"
    raise TypeError(f"not a sentence node: {node!r}")


def _wrap(node, fmt) -> str:
    text = fmt(node)
    return f"({text})" if isinstance(node, (And, Or)) else text


def sentence_hash(sentence) -> str:
    return hashlib.sha256(format_sentence(sentence).encode()).hexdigest()[:12]


# evaluation ----------------------------------------------------------------

def evaluate_formula(node, lookup):
    """Evaluate a formula tree; ``lookup(offset)`` returns a boolean array."""
    if isinstance(node, LocalFormula):
        node = node.tree
    if isinstance(node, Atom):
        return lookup(node.offset)
    if isinstance(node, Not):
        return np.logical_not(evaluate_formula(node.child, lookup))
    if isinstance(node, And):
        return np.logical_and(evaluate_formula(node.left, lookup), evaluate_formula(node.right, lookup))
    if isinstance(node, Or):
        return np.logical_or(evaluate_formula(node.left, lookup), evaluate_formula(node.right, lookup))
    raise TypeError(f"not a formula node: {node!r}")


def evaluate_on_balls(psi: LocalFormula, template: BallTemplate, balls: np.ndarray) -> np.ndarray:
    """Truth of ``psi`` for ball colorings ``balls[..., beta]``."""
    pos = template.position
    result = evaluate_formula(psi, lambda off: balls[..., pos[off]])
    return np.broadcast_to(result, balls.shape[:-1])


_CHUNK_BITS = 18


def decompose_codes(psi: LocalFormula, params: TorusParams, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """Codes of all ball colorings satisfying ``psi``, ascending."""
    template = ball_template(params, psi.radius)
    check_formula(psi, template)
    beta = template.beta
    if beta > cap:
        raise EnumerationCapError(
            f"ball of radius {psi.radius} has beta={beta} > enumeration cap {cap}"
        )
    total = 1 << beta
    step = 1 << min(beta, _CHUNK_BITS)
    found = []
    for start in range(0, total, step):
        codes = np.arange(start, min(start + step, total), dtype=np.int64)
        ok = evaluate_on_balls(psi, template, codes_to_bits(codes, beta))
        found.append(codes[ok])
    return np.concatenate(found)


def decompose(psi: LocalFormula, params: TorusParams, cap: int = DEFAULT_ENUMERATION_CAP) -> list:
    """Complete descriptions ``D`` with ``D -> psi``; empty iff ``psi`` is unsatisfiable."""
    template = ball_template(params, psi.radius)
    return [LocalConfiguration.from_code(template, int(c)) for c in decompose_codes(psi, params, cap)]


def _popcount(codes: np.ndarray) -> np.ndarray:
    counts = np.zeros(codes.shape, dtype=np.int64)
    codes = codes.copy()
    while codes.any():
        counts += codes & 1
        codes >>= 1
    return counts


def min_plus_counts(sentence: BasicLocalSentence, params: TorusParams, cap: int = DEFAULT_ENUMERATION_CAP) -> list:
    """Per witness formula, the fewest pluses among satisfying descriptions (inf if none)."""
    out = []
    for psi in sentence.psis:
        codes = decompose_codes(psi, params, cap)
        out.append(int(_popcount(codes).min()) if codes.size else INFINITY)
    return out


def index(sentence: BasicLocalSentence, params: TorusParams, cap: int = DEFAULT_ENUMERATION_CAP):
    """Index ``k(L) = max_i min_j plus_count(D_ij)``; ``INFINITY`` if unsatisfiable."""
    if not isinstance(sentence, BasicLocalSentence):
        raise TypeError("index is defined for basic local sentences; use leaf_indices for combinations")
    mins = min_plus_counts(sentence, params, cap)
    return max(mins)


def leaf_indices(sentence, params: TorusParams, cap: int = DEFAULT_ENUMERATION_CAP) -> list:
    return [index(leaf, params, cap) for leaf in leaves(sentence)]


# pattern embedding -----------------------------------------------------------

def embedding_radius(m: int, r: int, rho: int) -> int:
    return m * (rho * r + 1)


def embedding_centers(m: int, r: int, params: TorusParams) -> list:
    """Centers of the ``m`` sub-balls inside ``B(0, R)``, all along the first axis."""
    R = embedding_radius(m, r, params.rho)
    step = params.rho * r + 1
    return [
        (-R + step + i * 2 * step,) + (0,) * (params.d - 1)
        for i in range(m)
    ]


def embed_pattern(descriptions, m: int, params: TorusParams) -> LocalConfiguration:
    """Single description on ``B(0, R)``, ``R = m(rho r + 1)``, implying the pattern.

    Sub-ball ``i`` carries ``descriptions[i]``; every other vertex of the big
    ball is black. A single description is reused for all ``m`` sub-balls.
    """
    descriptions = list(descriptions)
    if len(descriptions) == 1 and m > 1:
        descriptions = descriptions * m
    if len(descriptions) != m or m < 1:
        raise ValueError(f"need m={m} descriptions, got {len(descriptions)}")
    radii = {desc.radius for desc in descriptions}
    if len(radii) != 1:
        raise ValueError("all descriptions must share one radius")
    r = radii.pop()
    R = embedding_radius(m, r, params.rho)
    if params.n <= 2 * params.rho * R:
        raise ValueError(f"cannot place {m} disjoint balls: need n > 2*rho*R = {2 * params.rho * R}")
    big = ball_template(params, R)
    colors = [True] * big.beta
    used = set()
    for center, desc in zip(embedding_centers(m, r, params), descriptions):
        for off, color in zip(desc.template.offsets, desc.colors):
            target = tuple(c + o for c, o in zip(center, off))
            if target not in big or target in used:
                raise ValueError("cannot place disjoint sub-balls inside B(0,R)")
            used.add(target)
            colors[big.position[target]] = color
    return LocalConfiguration(big, tuple(colors))


def distance_constraint_holds(params: TorusParams, xs, r: int) -> bool:
    xs = [params.index(x) for x in xs]
    return all(
        torus_distance(params, xs[i], xs[j]) > 2 * r
        for i in range(len(xs))
        for j in range(i + 1, len(xs))
    )
