"""Concrete syntax for loop tasks (`.imp` files): parser and printer.

Shape of a task::

    int n;                       // declarations are optional
    assume x <= 10;              // leading assumes/assignments fold into init
    y = 0;
    while (y < 1000) {           // or while (*)
        invariant x >= y;        // optional reference invariant annotations
        x = x + y;
        y = y + 1;
    }
    assume x == 20;              // trailing assumes fold into post
    assert x >= y;

Expressions are linear: sums of integer-scaled variables.  Comparisons:
< <= > >= == !=; connectives: && || ! ->; comments: //.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .formulas import (
    FALSE, TRUE, And, Atom, FalseF, Formula, Implies, LinExpr, Not, Or, Rel,
    TrueF, VarId, conj, disj, free_vars, negate, negate_atom, normalize_atom,
    subst_vars,
)
from .programs import Assign, Assume, If, LoopTask, Seq, Skip, Stmt, seq


class ParseError(Exception):
    def __init__(self, msg, line=None, col=None):
        loc = f" at {line}:{col}" if line is not None else ""
        super().__init__(f"{msg}{loc}")
        self.line = line
        self.col = col


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|==|!=|&&|\|\||->|[-+*<>=!(){},;])
""", re.VERBOSE)

KEYWORDS = {"int", "skip", "assume", "assert", "if", "else", "while",
            "invariant", "true", "false"}


@dataclass
class Token:
    kind: str      # "int" | "ident" | "op" | "eof"
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[Token]:
    toks = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        tok = m.group()
        if kind != "ws":
            toks.append(Token(kind, tok, line, col))
        nl = tok.count("\n")
        if nl:
            line += nl
            col = len(tok) - tok.rfind("\n")
        else:
            col += len(tok)
        pos = m.end()
    toks.append(Token("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    # -- token plumbing ----------------------------------------------------
    def peek(self, k=0) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def expect(self, text: str) -> Token:
        t = self.peek()
        if t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text or 'EOF'!r}",
                             t.line, t.col)
        return self.next()

    def at(self, text: str) -> bool:
        return self.peek().text == text

    def fail(self, msg: str):
        t = self.peek()
        raise ParseError(msg, t.line, t.col)

    # -- expressions -------------------------------------------------------
    def parse_expr(self) -> LinExpr:
        e = self.parse_term()
        while self.peek().text in ("+", "-"):
            op = self.next().text
            rhs = self.parse_term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def parse_term(self) -> LinExpr:
        neg = False
        while self.peek().text == "-":
            self.next()
            neg = not neg
        t = self.peek()
        if t.kind == "int":
            self.next()
            k = int(t.text)
            if self.at("*"):
                self.next()
                v = self.parse_var_ref()
                e = LinExpr.var(v, k)
            else:
                e = LinExpr.of(k)
        elif t.kind == "ident" and t.text not in KEYWORDS:
            self.next()
            v = VarId(t.text)
            if self.at("*"):
                self.next()
                t2 = self.peek()
                if t2.kind != "int":
                    self.fail("nonlinear term: variables may only be "
                              "multiplied by constants")
                self.next()
                e = LinExpr.var(v, int(t2.text))
            else:
                e = LinExpr.var(v)
        elif t.text == "(":
            self.next()
            e = self.parse_expr()
            self.expect(")")
        else:
            self.fail(f"expected expression, found {t.text or 'EOF'!r}")
        return -e if neg else e

    def parse_var_ref(self) -> VarId:
        t = self.peek()
        if t.kind != "ident" or t.text in KEYWORDS:
            self.fail("expected variable name")
        self.next()
        return VarId(t.text)

    # -- formulas ----------------------------------------------------------
    def parse_formula(self) -> Formula:
        lhs = self.parse_disjunction()
        if self.at("->"):
            self.next()
            return Implies(lhs, self.parse_formula())
        return lhs

    def parse_disjunction(self) -> Formula:
        parts = [self.parse_conjunction()]
        while self.at("||"):
            self.next()
            parts.append(self.parse_conjunction())
        return disj(parts) if len(parts) > 1 else parts[0]

    def parse_conjunction(self) -> Formula:
        parts = [self.parse_unary()]
        while self.at("&&"):
            self.next()
            parts.append(self.parse_unary())
        return conj(parts) if len(parts) > 1 else parts[0]

    def parse_unary(self) -> Formula:
        t = self.peek()
        if t.text == "!":
            self.next()
            return negate(self.parse_unary())
        if t.text == "true":
            self.next()
            return TRUE
        if t.text == "false":
            self.next()
            return FALSE
        if t.text == "(":
            # Either a parenthesized formula or an expression; backtrack.
            save = self.i
            try:
                return self.parse_comparison()
            except ParseError:
                self.i = save
            self.next()
            f = self.parse_formula()
            self.expect(")")
            return f
        return self.parse_comparison()

    def parse_comparison(self) -> Formula:
        lhs = self.parse_expr()
        t = self.peek()
        if t.text not in ("<", "<=", ">", ">=", "==", "!="):
            self.fail("expected comparison operator")
        self.next()
        rhs = self.parse_expr()
        return normalize_atom(lhs, t.text, rhs)

    # -- statements ----------------------------------------------------------
    def parse_guard(self) -> Optional[Formula]:
        self.expect("(")
        if self.at("*"):
            self.next()
            self.expect(")")
            return None
        f = self.parse_formula()
        self.expect(")")
        return f

    def parse_block(self, allow_invariants=False):
        self.expect("{")
        invs: list[Formula] = []
        while allow_invariants and self.at("invariant"):
            self.next()
            invs.append(self.parse_formula())
            self.expect(";")
        stmts: list[Stmt] = []
        while not self.at("}"):
            stmts.append(self.parse_stmt())
        self.expect("}")
        return seq(stmts), invs

    def parse_stmt(self) -> Stmt:
        t = self.peek()
        if t.text == "skip":
            self.next()
            self.expect(";")
            return Skip()
        if t.text == "assume":
            self.next()
            f = self.parse_formula()
            self.expect(";")
            return Assume(f)
        if t.text == "if":
            self.next()
            cond = self.parse_guard()
            then, _ = self.parse_block()
            els = None
            if self.at("else"):
                self.next()
                els, _ = self.parse_block()
            return If(cond, then, els)
        if t.text == "while":
            self.fail("nested loops are not supported")
        if t.kind == "ident" and t.text not in KEYWORDS:
            name = self.next().text
            self.expect("=")
            e = self.parse_expr()
            self.expect(";")
            return Assign(VarId(name), e)
        self.fail(f"expected statement, found {t.text or 'EOF'!r}")

    # -- whole task ----------------------------------------------------------
    def parse_task(self) -> LoopTask:
        declared: list[str] = []
        prefix: list[Stmt] = []
        while not self.at("while"):
            if self.at("int"):
                self.next()
                declared.append(self.parse_var_ref().name)
                while self.at(","):
                    self.next()
                    declared.append(self.parse_var_ref().name)
                self.expect(";")
                continue
            if self.peek().kind == "eof":
                self.fail("expected a while loop")
            s = self.parse_stmt()
            if not isinstance(s, (Assume, Assign, Skip)):
                self.fail("only assume/assignment statements may precede "
                          "the loop")
            prefix.append(s)

        self.expect("while")
        guard = self.parse_guard()
        body, invariants = self.parse_block(allow_invariants=True)
        if isinstance(body, Skip):
            self.fail("empty loop body")

        trailing: list[Formula] = []
        while self.at("assume"):
            self.next()
            trailing.append(self.parse_formula())
            self.expect(";")
        self.expect("assert")
        post_base = self.parse_formula()
        self.expect(";")
        t = self.peek()
        if t.kind != "eof":
            self.fail(f"unexpected trailing input {t.text!r}")

        init, prefix_assigned = _fold_init(prefix)
        post = disj([negate(a) for a in trailing] + [post_base])

        body_assigned = {v.name for v in _assigned_in(body)}
        assigned = prefix_assigned | body_assigned
        used = ({v.name for v in free_vars(init)}
                | {v.name for v in free_vars(post)}
                | _stmt_var_names(body) | set(declared))
        if guard is not None:
            used |= {v.name for v in free_vars(guard)}
        for f in invariants:
            used |= {v.name for v in free_vars(f)}
        names = sorted(used)
        vs = tuple(VarId(n, "mutable" if n in assigned else "parameter")
                   for n in names)
        return LoopTask(init, guard, body, post, vs, tuple(invariants))


def _assigned_in(s: Stmt) -> set[VarId]:
    from .programs import modified_vars
    return modified_vars(s)


def _stmt_var_names(s: Stmt) -> set[str]:
    from .programs import stmt_vars
    return {v.name for v in stmt_vars(s)}


def _fold_init(prefix: list[Stmt]) -> tuple[Formula, set[str]]:
    """Turn leading assumes/assignments into an entry-state formula.

    Runs the prefix symbolically over initial-value symbols.  The result
    is expressible as a formula over loop-entry values only when assumed
    facts and final assigned values refer to variables that the prefix
    never overwrites; anything else is rejected.
    """
    sigma: dict[VarId, LinExpr] = {}
    events: list[tuple[int, Formula]] = []   # (order key, assumed conjunct)
    assign_pos: dict[VarId, int] = {}
    assigned: set[str] = set()

    def apply_sigma(e: LinExpr) -> LinExpr:
        acc = LinExpr.make({v: c for v, c in e.coeffs if v not in sigma},
                           e.const, e.meta_map())
        for v, c in e.coeffs:
            if v in sigma:
                acc = acc + sigma[v].scale(c)
        return acc

    for idx, s in enumerate(prefix):
        if isinstance(s, Skip):
            continue
        if isinstance(s, Assume):
            f = subst_vars(s.cond, sigma) if sigma else s.cond
            events.append((idx, f))
        elif isinstance(s, Assign):
            sigma[s.target] = apply_sigma(s.expr)
            assign_pos[s.target] = idx
            assigned.add(s.target.name)
        else:
            raise ParseError("unsupported statement before the loop")

    conjuncts: list[tuple[int, Formula]] = []
    for idx, f in events:
        bad = {v.name for v in free_vars(f)} & assigned
        if bad:
            raise ParseError(
                "cannot fold the initial section into a formula: assumption "
                f"refers to overwritten variable(s) {sorted(bad)}")
        conjuncts.append((idx, f))
    for v, e in sigma.items():
        bad = {w.name for w in e.vars()} & assigned
        if bad:
            raise ParseError(
                "cannot fold the initial section into a formula: "
                f"{v.name} is defined from overwritten variable(s) {sorted(bad)}")
        conjuncts.append((assign_pos[v], normalize_atom(LinExpr.var(v), "==", e)))

    conjuncts.sort(key=lambda p: p[0])
    return conj([f for _, f in conjuncts]), assigned


def parse_task(text: str) -> LoopTask:
    return _Parser(text).parse_task()


def parse_formula(text: str) -> Formula:
    p = _Parser(text)
    f = p.parse_formula()
    t = p.peek()
    if t.kind != "eof":
        raise ParseError(f"unexpected trailing input {t.text!r}", t.line, t.col)
    return f


# ---------------------------------------------------------------------------
# Printing

@dataclass
class RenderStyle:
    """Surface-level presentation choices; all semantics-preserving.

    post_assume_split: render this many leading post disjuncts as negated
    trailing `assume` statements.  init_as_instrs: render init equalities
    as assignments where possible.  comparison_styles: per-atom rendering
    overrides ("strict" and/or "swap"), keyed by the atom.
    """
    post_assume_split: int = 0
    init_as_instrs: bool = False
    comparison_styles: dict = field(default_factory=dict)


def _split_terms(e: LinExpr):
    pos = [(v.name, c) for v, c in e.coeffs if c > 0]
    pos += [(f"{m.id}?", c) for m, c in e.metas if c > 0]
    neg = [(v.name, -c) for v, c in e.coeffs if c < 0]
    neg += [(f"{m.id}?", -c) for m, c in e.metas if c < 0]
    return pos, neg


def _side(terms, const) -> str:
    parts = []
    for name, c in terms:
        parts.append(name if c == 1 else f"{c}*{name}")
    out = " + ".join(parts)
    if const:
        out = (f"{out} + {const}" if const > 0 else f"{out} - {-const}") \
            if out else str(const)
    return out or "0"


def render_atom(a: Atom, style: Optional[str] = None) -> str:
    """Render a normalized atom as a comparison.

    style: None (canonical), "strict" (use </>), "swap" (flip sides),
    "strict+swap".
    """
    e = a.expr
    pos, neg = _split_terms(e)
    # expr >= 0  <=>  pos + lk >= neg + rk
    lk = e.const if e.const > 0 else 0
    rk = -e.const if e.const < 0 else 0
    strict = style is not None and "strict" in style
    swap = style is not None and "swap" in style
    if a.rel is Rel.EQ:
        op = "=="
        lhs, rhs = _side(pos, lk), _side(neg, rk)
    elif not pos and neg:
        # prefer `x <= 4` over `0 >= x - 4`
        if strict:
            op, lhs, rhs = "<", _side(neg, rk), _side(pos, lk + 1)
        else:
            op, lhs, rhs = "<=", _side(neg, rk), _side(pos, lk)
    else:
        if strict:
            op, lhs, rhs = ">", _side(pos, lk), _side(neg, rk - 1)
        else:
            op, lhs, rhs = ">=", _side(pos, lk), _side(neg, rk)
    if swap:
        lhs, rhs = rhs, lhs
        op = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "==": "=="}[op]
    return f"{lhs} {op} {rhs}"


from .formulas import detect_neq_expr as _neq_pattern  # noqa: E402


def render_formula(f: Formula, prec=0, styles=None) -> str:
    # precedence: -> 1, || 2, && 3, ! 4, atom 5
    def wrap(s, p):
        return f"({s})" if p < prec else s

    e = _neq_pattern(f)
    if e is not None:
        pos, neg = _split_terms(e)
        k = e.const
        lhs = _side(pos, k if k > 0 else 0)
        rhs = _side(neg, -k if k < 0 else 0)
        return f"{lhs} != {rhs}"
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, Atom):
        st = (styles or {}).get(f)
        return render_atom(f, st)
    if isinstance(f, Not):
        return f"!({render_formula(f.arg, 0, styles)})"
    if isinstance(f, And):
        return wrap(" && ".join(render_formula(a, 4, styles) for a in f.args), 3)
    if isinstance(f, Or):
        return wrap(" || ".join(render_formula(a, 3, styles) for a in f.args), 2)
    if isinstance(f, Implies):
        return wrap(f"{render_formula(f.lhs, 2, styles)} -> "
                    f"{render_formula(f.rhs, 1, styles)}", 1)
    raise TypeError(f)


def render_negated_atomish(f: Formula, styles=None) -> str:
    """Render the negation of a post disjunct as an assume condition."""
    if isinstance(f, Atom):
        return render_formula(negate_atom(f), styles=styles)
    e = _neq_pattern(f)
    if e is not None:
        pos, neg = _split_terms(e)
        k = e.const
        lhs = _side(pos, k if k > 0 else 0)
        rhs = _side(neg, -k if k < 0 else 0)
        return f"{lhs} == {rhs}"
    return f"!({render_formula(f, 0, styles)})"


def _render_stmt(s: Stmt, indent: int, out: list[str], styles=None):
    pad = "    " * indent
    if isinstance(s, Skip):
        out.append(f"{pad}skip;")
    elif isinstance(s, Assign):
        out.append(f"{pad}{s.target.name} = {s.expr};")
    elif isinstance(s, Assume):
        out.append(f"{pad}assume {render_formula(s.cond, styles=styles)};")
    elif isinstance(s, Seq):
        for sub in s.stmts:
            _render_stmt(sub, indent, out, styles)
    elif isinstance(s, If):
        g = "*" if s.cond is None else render_formula(s.cond, styles=styles)
        out.append(f"{pad}if ({g}) {{")
        _render_stmt(s.then, indent + 1, out, styles)
        out.append(f"{pad}}}" + (" else {" if s.els is not None else ""))
        if s.els is not None:
            _render_stmt(s.els, indent + 1, out, styles)
            out.append(f"{pad}}}")
    else:
        raise TypeError(s)


def _eq_assignment_form(f: Formula):
    """If conjunct f is `v == e` with v's coefficient +-1 and v not free
    in e, return (v, e)."""
    if not (isinstance(f, Atom) and f.rel is Rel.EQ) or f.expr.metas:
        return None
    for v, c in f.expr.coeffs:
        if c in (1, -1):
            rest = f.expr + LinExpr.var(v, -c)
            e = rest.scale(-c)
            if v.name not in {w.name for w in e.vars()}:
                return v, e
    return None


def _assignment_plan(parts: list[Formula]) -> dict[int, tuple[VarId, LinExpr]]:
    """Choose which init conjuncts to render as assignments.

    Safe iff no rendered-assignment target is referenced by any other
    emitted conjunct (the parser rejects references to overwritten
    variables when folding the prefix back).  Computed as a shrinking
    fixpoint.
    """
    cands = {i: form for i, p in enumerate(parts)
             if (form := _eq_assignment_form(p)) is not None}
    while True:
        targets = {v.name for v, _ in cands.values()}
        if len(targets) < len(cands):      # duplicate target: drop later ones
            seen: set[str] = set()
            for i in sorted(cands):
                v = cands[i][0]
                if v.name in seen:
                    del cands[i]
                else:
                    seen.add(v.name)
            continue
        drop = []
        for i, (v, e) in cands.items():
            if {w.name for w in e.vars()} & targets:
                drop.append(i)
        for i, p in enumerate(parts):
            if i not in cands and {w.name for w in free_vars(p)} & targets:
                drop.extend(j for j, (v, _) in cands.items()
                            if v.name in {w.name for w in free_vars(p)})
        if not drop:
            return cands
        for i in set(drop):
            cands.pop(i, None)


def print_task(t: LoopTask, style: Optional[RenderStyle] = None) -> str:
    style = style or RenderStyle()
    styles = style.comparison_styles or None
    out: list[str] = []
    if t.vars:
        out.append("int " + ", ".join(v.name for v in t.vars) + ";")

    init_parts = list(t.init.args) if isinstance(t.init, And) else \
        ([] if isinstance(t.init, TrueF) else [t.init])
    plan = _assignment_plan(init_parts) if style.init_as_instrs else {}
    for idx, p in enumerate(init_parts):
        if idx in plan:
            v, e = plan[idx]
            out.append(f"{v.name} = {e};")
        else:
            out.append(f"assume {render_formula(p, styles=styles)};")

    g = "*" if t.guard is None else render_formula(t.guard, styles=styles)
    out.append(f"while ({g}) {{")
    for inv in t.invariants:
        out.append(f"    invariant {render_formula(inv, styles=styles)};")
    _render_stmt(t.body, 1, out, styles)
    out.append("}")

    post_parts = list(t.post.args) if isinstance(t.post, Or) else [t.post]
    split = min(style.post_assume_split, len(post_parts) - 1)
    for p in post_parts[:split]:
        out.append(f"assume {render_negated_atomish(p, styles)};")
    rest = disj(post_parts[split:])
    out.append(f"assert {render_formula(rest, styles=styles)};")
    return "\n".join(out) + "\n"
