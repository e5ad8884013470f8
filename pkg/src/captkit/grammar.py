"""Finite-state phoneme grammars and their compiled, decodable form.

Three builders cover the pipeline's needs: a linear alignment chain with
a silence policy, a substitution context (prev . X . next over all 40
symbols), and an insertion/deletion context (first . [X != second]? .
second?).  Grammars serialize to a JSGF subset: a `grammar` header and a
single public rule over sequences, `|` alternatives, `[...]` optionals,
and parentheses.  Kleene operators, rule references, weights, and
imports are out of scope and rejected explicitly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import DataFormatError, DomainError, UnsupportedConstructError
from .phoneset import SIL, PhonemeInventory

EPSILON = ""

SILENCE_POLICIES = ("edges_only", "between_words", "none")


# ---------------------------------------------------------------------------
# Expression tree (construction recipe; also the serializer's source)


@dataclass(frozen=True)
class Sym:
    text: str


@dataclass(frozen=True)
class Seq:
    parts: tuple


@dataclass(frozen=True)
class Alt:
    options: tuple


@dataclass(frozen=True)
class Opt:
    inner: object


@dataclass
class Edge:
    src: int
    dst: int
    label: str  # phoneme symbol or EPSILON


@dataclass
class Grammar:
    name: str
    num_states: int
    start: int
    accepting: frozenset[int]
    edges: list[Edge]
    expr: object | None = field(default=None, repr=False)

    def validate(self, inventory: PhonemeInventory | None = None) -> None:
        if not 0 <= self.start < self.num_states:
            raise DomainError("start state out of range")
        if not self.accepting:
            raise DomainError("grammar needs at least one accepting state")
        for s in self.accepting:
            if not 0 <= s < self.num_states:
                raise DomainError("accepting state out of range")
        adj: dict[int, list[int]] = {}
        eps_adj: dict[int, list[int]] = {}
        for e in self.edges:
            if not (0 <= e.src < self.num_states and 0 <= e.dst < self.num_states):
                raise DomainError("edge endpoint out of range")
            adj.setdefault(e.src, []).append(e.dst)
            if e.label == EPSILON:
                eps_adj.setdefault(e.src, []).append(e.dst)
            elif inventory is not None and e.label not in inventory:
                raise DomainError(f"edge label {e.label!r} not in inventory")
        reachable = _closure({self.start}, adj)
        for s in self.accepting:
            if s not in reachable:
                raise DomainError(f"accepting state {s} unreachable from start")
        # no ε-cycles: DFS with colors over ε edges only
        color = {}

        def visit(u):
            color[u] = 1
            for v in eps_adj.get(u, []):
                if color.get(v) == 1:
                    raise DomainError("grammar contains an epsilon cycle")
                if v not in color:
                    visit(v)
            color[u] = 2

        for u in range(self.num_states):
            if u not in color:
                visit(u)


@dataclass
class Arc:
    id: int
    src: int
    dst: int
    phoneme: str


@dataclass
class CompiledGrammar:
    name: str
    num_states: int
    start: int
    accepting: frozenset[int]
    arcs: list[Arc]

    def __post_init__(self):
        self.arcs_from: dict[int, list[Arc]] = {}
        for a in self.arcs:
            self.arcs_from.setdefault(a.src, []).append(a)

    @property
    def accepts_empty(self) -> bool:
        return self.start in self.accepting

    def symbols(self) -> list[str]:
        return sorted({a.phoneme for a in self.arcs})


def _closure(seed: set[int], adj: dict[int, list[int]]) -> set[int]:
    seen = set(seed)
    stack = list(seed)
    while stack:
        u = stack.pop()
        for v in adj.get(u, []):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def compile(g: Grammar, inventory: PhonemeInventory | None = None) -> CompiledGrammar:
    """ε-removal + reachability pruning; language-preserving."""
    g.validate(inventory)
    eps_adj: dict[int, list[int]] = {}
    labeled: dict[int, list[tuple[str, int]]] = {}
    for e in g.edges:
        if e.label == EPSILON:
            eps_adj.setdefault(e.src, []).append(e.dst)
        else:
            labeled.setdefault(e.src, []).append((e.label, e.dst))
    closures = {u: _closure({u}, eps_adj) for u in range(g.num_states)}
    raw_arcs: dict[int, set[tuple[str, int]]] = {u: set() for u in range(g.num_states)}
    for u in range(g.num_states):
        for x in closures[u]:
            for label, y in labeled.get(x, []):
                raw_arcs[u].add((label, y))
    accepting = {u for u in range(g.num_states) if closures[u] & g.accepting}
    # prune to states reachable from start through labeled arcs
    adj = {u: [dst for _, dst in raw_arcs[u]] for u in range(g.num_states)}
    keep = _closure({g.start}, adj)
    remap = {u: i for i, u in enumerate(sorted(keep))}
    arcs = []
    for u in sorted(keep):
        for label, y in sorted(raw_arcs[u]):
            if y in keep:
                arcs.append(Arc(id=len(arcs), src=remap[u], dst=remap[y], phoneme=label))
    new_accept = frozenset(remap[u] for u in accepting if u in keep)
    if not new_accept:
        raise DomainError("no accepting state reachable after compilation")
    return CompiledGrammar(name=g.name, num_states=len(keep), start=remap[g.start],
                           accepting=new_accept, arcs=arcs)


def enumerate_language(
    cg: CompiledGrammar | Grammar,
    max_len: int | None = None,
    limit: int = 100000,
) -> set[tuple[str, ...]]:
    """All accepted symbol strings, optionally capped at max_len symbols."""
    if isinstance(cg, Grammar):
        cg = compile(cg)
    if max_len is None:
        # refuse unbounded enumeration of cyclic graphs
        order, ok = _toposort(cg)
        if not ok:
            raise DomainError("cyclic grammar needs an explicit max_len")
    out: set[tuple[str, ...]] = set()
    stack: list[tuple[int, tuple[str, ...]]] = [(cg.start, ())]
    while stack:
        state, prefix = stack.pop()
        if state in cg.accepting:
            out.add(prefix)
            if len(out) > limit:
                raise DomainError(f"language exceeds {limit} strings")
        if max_len is not None and len(prefix) >= max_len:
            continue
        for arc in cg.arcs_from.get(state, []):
            stack.append((arc.dst, prefix + (arc.phoneme,)))
    return out


def _toposort(cg: CompiledGrammar) -> tuple[list[int], bool]:
    indeg = {u: 0 for u in range(cg.num_states)}
    for a in cg.arcs:
        indeg[a.dst] += 1
    queue = [u for u, d in indeg.items() if d == 0]
    order = []
    while queue:
        u = queue.pop()
        order.append(u)
        for a in cg.arcs_from.get(u, []):
            indeg[a.dst] -= 1
            if indeg[a.dst] == 0:
                queue.append(a.dst)
    return order, len(order) == cg.num_states


# ---------------------------------------------------------------------------
# Expression -> graph


class _Builder:
    def __init__(self):
        self.n = 0
        self.edges: list[Edge] = []

    def state(self) -> int:
        self.n += 1
        return self.n - 1

    def edge(self, src, dst, label):
        self.edges.append(Edge(src=src, dst=dst, label=label))

    def expand(self, expr) -> tuple[int, int]:
        if isinstance(expr, Sym):
            a, b = self.state(), self.state()
            self.edge(a, b, expr.text)
            return a, b
        if isinstance(expr, Seq):
            if not expr.parts:
                a = self.state()
                return a, a
            first_start, prev_end = self.expand(expr.parts[0])
            for part in expr.parts[1:]:
                s, e = self.expand(part)
                self.edge(prev_end, s, EPSILON)
                prev_end = e
            return first_start, prev_end
        if isinstance(expr, Alt):
            a, b = self.state(), self.state()
            for option in expr.options:
                s, e = self.expand(option)
                self.edge(a, s, EPSILON)
                self.edge(e, b, EPSILON)
            return a, b
        if isinstance(expr, Opt):
            s, e = self.expand(expr.inner)
            self.edge(s, e, EPSILON)
            return s, e
        raise DomainError(f"unknown expression node {type(expr).__name__}")


def from_expr(expr, name: str) -> Grammar:
    b = _Builder()
    start, end = b.expand(expr)
    return Grammar(name=name, num_states=b.n, start=start,
                   accepting=frozenset({end}), edges=b.edges, expr=expr)


# ---------------------------------------------------------------------------
# Builders


def _check_symbols(inventory: PhonemeInventory, *symbols: str) -> None:
    for s in symbols:
        if s not in inventory:
            raise DomainError(f"unknown phoneme {s!r}")


def build_alignment_grammar(
    words: list[list[str]] | list[str],
    inventory: PhonemeInventory,
    silence_policy: str = "edges_only",
) -> Grammar:
    """Linear chain over the expected phonemes with optional silence.

    ``words`` is a list of per-word phoneme lists; a flat list of symbols
    is treated as a single word.  edges_only allows optional SIL at the
    utterance edges, between_words at interior word boundaries only, and
    none nowhere.
    """
    if silence_policy not in SILENCE_POLICIES:
        raise DomainError(f"silence_policy must be one of {SILENCE_POLICIES}")
    if not words:
        raise DomainError("empty phoneme sequence")
    if isinstance(words[0], str):
        words = [list(words)]
    words = [list(w) for w in words]
    if any(not w for w in words):
        raise DomainError("empty word in phoneme sequence")
    for w in words:
        _check_symbols(inventory, *w)

    word_exprs = [Seq(tuple(Sym(p) for p in w)) for w in words]
    parts: list[object] = []
    if silence_policy == "edges_only":
        parts.append(Opt(Sym(SIL)))
    for i, we in enumerate(word_exprs):
        if i > 0 and silence_policy == "between_words":
            parts.append(Opt(Sym(SIL)))
        parts.append(we)
    if silence_policy == "edges_only":
        parts.append(Opt(Sym(SIL)))
    flat = "_".join("".join(w) for w in words)
    return from_expr(Seq(tuple(parts)), name=f"align_{flat}")


def build_substitution_grammar(
    prev: str, next_: str, inventory: PhonemeInventory
) -> Grammar:
    """prev . X . next with X ranging over the whole inventory (40 symbols)."""
    _check_symbols(inventory, prev, next_)
    middle = Alt(tuple(Sym(s) for s in inventory.symbols))
    expr = Seq((Sym(prev), middle, Sym(next_)))
    return from_expr(expr, name=f"sub_{prev}_{next_}")


def build_insdel_grammar(
    first: str, second: str, inventory: PhonemeInventory
) -> Grammar:
    """first . [X != second]? . second? — insertion and deletion context.

    Accepts exactly: first; first.second; first.X; first.X.second for the
    39 X != second (X over the whole inventory including SIL).
    """
    _check_symbols(inventory, first, second)
    others = tuple(Sym(s) for s in inventory.symbols if s != second)
    expr = Seq((Sym(first), Opt(Alt(others)), Opt(Sym(second))))
    return from_expr(expr, name=f"insdel_{first}_{second}")


# ---------------------------------------------------------------------------
# JSGF subset


_TOKEN_RE = re.compile(r"[A-Za-z0-9_.]+|.")


class _Tok:
    __slots__ = ("text", "line", "col")

    def __init__(self, text, line, col):
        self.text, self.line, self.col = text, line, col


def _tokenize(text: str) -> list[_Tok]:
    tokens = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        if raw.lstrip().startswith("#"):
            continue  # the #JSGF self-identifying header
        pos = 0
        while pos < len(raw):
            if raw[pos].isspace():
                pos += 1
                continue
            m = _TOKEN_RE.match(raw, pos)
            tokens.append(_Tok(m.group(0), ln, pos + 1))
            pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Tok]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> _Tok | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self) -> _Tok:
        tok = self.peek()
        if tok is None:
            raise DataFormatError("unexpected end of grammar text")
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.next()
        if tok.text != text:
            raise DataFormatError(
                f"line {tok.line} col {tok.col}: expected {text!r}, got {tok.text!r}")
        return tok

    def fail(self, tok: _Tok, why: str):
        raise DataFormatError(f"line {tok.line} col {tok.col}: {why}")

    def unsupported(self, tok: _Tok, what: str):
        raise UnsupportedConstructError(
            f"line {tok.line} col {tok.col}: {what} is outside the supported subset")

    def parse(self) -> tuple[str, str, object]:
        self.expect("grammar")
        name_tok = self.next()
        if not re.fullmatch(r"[A-Za-z0-9_.]+", name_tok.text):
            self.fail(name_tok, f"bad grammar name {name_tok.text!r}")
        self.expect(";")
        tok = self.next()
        if tok.text == "import":
            self.unsupported(tok, "import")
        if tok.text != "public":
            if tok.text == "<":
                self.unsupported(tok, "non-public rule")
            self.fail(tok, f"expected 'public', got {tok.text!r}")
        self.expect("<")
        rule_tok = self.next()
        if not re.fullmatch(r"[A-Za-z0-9_.]+", rule_tok.text):
            self.fail(rule_tok, f"bad rule name {rule_tok.text!r}")
        self.expect(">")
        self.expect("=")
        expr = self.alternatives()
        self.expect(";")
        trailing = self.peek()
        if trailing is not None:
            if trailing.text in ("public", "<"):
                self.unsupported(trailing, "more than one rule")
            self.fail(trailing, f"unexpected {trailing.text!r} after rule")
        return name_tok.text, rule_tok.text, expr

    def alternatives(self) -> object:
        options = [self.sequence()]
        while self.peek() is not None and self.peek().text == "|":
            self.next()
            options.append(self.sequence())
        return options[0] if len(options) == 1 else Alt(tuple(options))

    def sequence(self) -> object:
        parts = []
        while True:
            tok = self.peek()
            if tok is None or tok.text in (";", "|", "]", ")"):
                break
            parts.append(self.element())
        if not parts:
            tok = self.peek() or _Tok("<end>", 0, 0)
            self.fail(tok, "empty sequence")
        return parts[0] if len(parts) == 1 else Seq(tuple(parts))

    def element(self) -> object:
        tok = self.next()
        if tok.text == "[":
            inner = self.alternatives()
            self.expect("]")
            out = Opt(inner)
        elif tok.text == "(":
            inner = self.alternatives()
            self.expect(")")
            out = inner
        elif tok.text == "<":
            self.unsupported(tok, "rule reference")
        elif tok.text in ("*", "+"):
            self.unsupported(tok, f"Kleene operator {tok.text!r}")
        elif tok.text in ("{", "/"):
            self.unsupported(tok, "tags and weights")
        elif re.fullmatch(r"[A-Za-z0-9_.]+", tok.text):
            out = Sym(tok.text.upper())
        else:
            self.fail(tok, f"unexpected {tok.text!r}")
            raise AssertionError  # unreachable
        nxt = self.peek()
        if nxt is not None and nxt.text in ("*", "+"):
            self.unsupported(nxt, f"Kleene operator {nxt.text!r}")
        return out


def parse_jsgf(text: str) -> Grammar:
    if not text.strip():
        raise DataFormatError("empty grammar text")
    name, _rule, expr = _Parser(_tokenize(text)).parse()
    return from_expr(expr, name=name)


def _expr_text(expr, top: bool = False) -> str:
    if isinstance(expr, Sym):
        return expr.text
    if isinstance(expr, Seq):
        return " ".join(_expr_text(p) for p in expr.parts)
    if isinstance(expr, Alt):
        body = " | ".join(_expr_text(o) for o in expr.options)
        return body if top else f"( {body} )"
    if isinstance(expr, Opt):
        return f"[ {_expr_text(expr.inner, top=True)} ]"
    raise DomainError(f"unknown expression node {type(expr).__name__}")


def serialize_jsgf(g: Grammar, max_enumeration: int = 2000) -> str:
    """JSGF text whose language equals g's.

    Uses the construction expression when the grammar carries one;
    otherwise falls back to enumerating the language into alternatives.
    """
    expr = g.expr
    if expr is None:
        strings = sorted(enumerate_language(g, limit=max_enumeration))
        if not strings or strings[0] == ():
            raise DomainError("cannot serialize a grammar accepting the empty string")
        options = tuple(Seq(tuple(Sym(s) for s in string)) for string in strings)
        expr = options[0] if len(options) == 1 else Alt(options)
    name = re.sub(r"[^A-Za-z0-9_.]", "_", g.name) or "g"
    return (f"#JSGF V1.0;\n"
            f"grammar {name};\n"
            f"public <main> = {_expr_text(expr, top=True)};\n")


def dump(g: Grammar) -> str:
    """Debug listing of states and edges."""
    lines = [f"grammar {g.name}: {g.num_states} states, start {g.start}, "
             f"accepting {sorted(g.accepting)}"]
    for e in sorted(g.edges, key=lambda e: (e.src, e.dst, e.label)):
        label = e.label if e.label != EPSILON else "<eps>"
        lines.append(f"  {e.src} -> {e.dst}  {label}")
    return "\n".join(lines) + "\n"
