"""Text format for causal factor models (``.ram`` files).

One declaration per statement, each terminated by ``;``::

    version 1;
    factor W "badWeather" class d;
    factor C "collision" class nm offRepair mitigation protection by Ab;
    situation drive aspect factors {W, O, nC, C};
    constraint in drive C requires nC;
    process P0 = start ; (basic || supplyPower || D1);
    root P0;

Process operators by decreasing precedence: postfix ``*``, ``||`` (or ``∥``),
``|``, ``;``. ``#`` starts a comment running to the end of the line.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Union

from ramkit.model import (
    CausalFactor,
    CausalFactorModel,
    Constraint,
    ConstraintKind,
    EndangermentClass,
    MitigationClass,
    Severity,
    Situation,
    SituationKind,
    validate,
)
from ramkit.process import Atom, Choice, Par, ProcessExpr, Ref, Seq, Star, format_expr

FORMAT_VERSION = 1
HEADER = f"# ramkit causal factor model, format version {FORMAT_VERSION}"

DECLARATIONS = frozenset({"version", "factor", "situation", "constraint", "process", "root"})
# "phi" is held back for admissibility filters over parallel runs; it has no meaning yet.
RESERVED = DECLARATIONS | {"phi"}

FACTOR_FLAGS = ("mishap", "direct", "offRepair", "reEndanger")
_FLAG_FIELDS = {"mishap": "mishap", "direct": "direct", "offRepair": "off_repair", "reEndanger": "re_endanger"}


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    column: int
    length: int = 1

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


@dataclass(frozen=True)
class ParseDiagnostic:
    span: SourceSpan
    severity: Severity
    message: str

    def __str__(self) -> str:
        return f"{self.span}: {self.severity.value}: {self.message}"


class DSLError(ValueError):
    """Raised when a model text has at least one error diagnostic."""

    def __init__(self, diagnostics: list[ParseDiagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))


class Tok(enum.Enum):
    IDENT = "identifier"
    NUMBER = "number"
    STRING = "string"
    PUNCT = "symbol"
    EOF = "end of input"


@dataclass(frozen=True)
class Token:
    kind: Tok
    text: str
    span: SourceSpan


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<number>[0-9]+)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<punct>\|\||∥|[;{},()=*|])
    """,
    re.VERBOSE,
)


def tokenize(text: str, file: str = "<input>") -> tuple[list[Token], list[ParseDiagnostic]]:
    tokens: list[Token] = []
    diags: list[ParseDiagnostic] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            ch = text[pos]
            if ch == '"':
                end = text.find("\n", pos)
                end = len(text) if end < 0 else end
                diags.append(_diag(SourceSpan(file, line, col, end - pos), "lexical error: unterminated string"))
                pos = end
            else:
                diags.append(_diag(SourceSpan(file, line, col), f"lexical error: unexpected character {ch!r}"))
                pos += 1
            continue
        kind = m.lastgroup
        value = m.group()
        if kind in ("ws", "comment"):
            newlines = value.count("\n")
            if newlines:
                line += newlines
                line_start = pos + value.rindex("\n") + 1
        else:
            span = SourceSpan(file, line, col, len(value))
            if kind == "string":
                value = re.sub(r"\\(.)", r"\1", value[1:-1])
                tokens.append(Token(Tok.STRING, value, span))
            elif kind == "punct":
                tokens.append(Token(Tok.PUNCT, "||" if value == "∥" else value, span))
            else:
                tokens.append(Token(Tok.IDENT if kind == "ident" else Tok.NUMBER, value, span))
        pos = m.end()
    tokens.append(Token(Tok.EOF, "", SourceSpan(file, line, pos - line_start + 1)))
    return tokens, diags


def _diag(span: SourceSpan, message: str, severity: Severity = Severity.ERROR) -> ParseDiagnostic:
    return ParseDiagnostic(span, severity, message)


class _SyntaxError(Exception):
    def __init__(self, token: Token, message: str):
        self.token = token
        self.message = message


@dataclass(frozen=True)
class _Name:
    """Unresolved identifier inside a process expression."""

    name: str
    span: SourceSpan


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind is not Tok.EOF:
            self.pos += 1
        return t

    def at(self, text: str) -> bool:
        return self.tok.kind in (Tok.PUNCT, Tok.IDENT) and self.tok.text == text

    def accept(self, text: str) -> Optional[Token]:
        return self.advance() if self.at(text) else None

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise _SyntaxError(self.tok, f"expected {text!r}, found {_describe(self.tok)}")
        return self.advance()

    def ident(self, what: str) -> Token:
        if self.tok.kind is not Tok.IDENT:
            raise _SyntaxError(self.tok, f"expected {what}, found {_describe(self.tok)}")
        if self.tok.text in RESERVED:
            raise _SyntaxError(self.tok, f"{self.tok.text!r} is reserved")
        return self.advance()

    def recover(self) -> None:
        while self.tok.kind is not Tok.EOF and not self.at(";"):
            self.advance()
        self.accept(";")

    # expr := choice (';' choice)* ; choice := par ('|' par)* ;
    # par := postfix ('||' postfix)* ; postfix := primary '*'*
    def expr(self):
        node = self.choice()
        # ';' before a declaration keyword or the end of input closes the statement.
        while self.at(";") and not self.ends_statement(self.tokens[self.pos + 1]):
            self.advance()
            if self.at(")"):
                raise _SyntaxError(self.tok, f"expected a process, found {_describe(self.tok)}")
            node = Seq(node, self.choice())
        return node

    @staticmethod
    def ends_statement(t: Token) -> bool:
        return t.kind is Tok.EOF or (t.kind is Tok.IDENT and t.text in DECLARATIONS)

    def choice(self):
        node = self.par()
        while self.accept("|"):
            node = Choice(node, self.par())
        return node

    def par(self):
        node = self.postfix()
        while self.accept("||"):
            node = Par(node, self.postfix())
        return node

    def postfix(self):
        node = self.primary()
        while self.accept("*"):
            node = Star(node)
        return node

    def primary(self):
        if self.at("("):
            open_tok = self.advance()
            node = self.expr()
            if not self.at(")"):
                raise _SyntaxError(open_tok, "unbalanced parentheses: '(' is never closed")
            self.advance()
            return node
        if self.at(")"):
            raise _SyntaxError(self.tok, "unbalanced parentheses: unexpected ')'")
        t = self.ident("a situation or process name")
        return _Name(t.text, t.span)


def _describe(t: Token) -> str:
    return t.kind.value if t.kind is Tok.EOF else repr(t.text)


def _resolve(expr, situations, processes, diags: list[ParseDiagnostic]) -> ProcessExpr:
    if isinstance(expr, _Name):
        if situations is None and expr.name not in processes:
            return Atom(expr.name)
        if situations is not None and expr.name in situations:
            return Atom(expr.name)
        if expr.name in processes:
            return Ref(expr.name)
        diags.append(_diag(expr.span, f"unknown reference: no situation or process named {expr.name!r}"))
        return Atom(expr.name)
    if isinstance(expr, Star):
        return Star(_resolve(expr.body, situations, processes, diags))
    return type(expr)(
        _resolve(expr.left, situations, processes, diags),
        _resolve(expr.right, situations, processes, diags),
    )


def parse_process_expr(
    text: str,
    situations: Optional[Iterable[str]] = None,
    processes: Iterable[str] = (),
    file: str = "<expr>",
) -> ProcessExpr:
    """Parse one process expression.

    Names listed in ``processes`` become references; with ``situations``
    given, any other name must be one of them, otherwise it is taken as a
    situation.
    """
    tokens, diags = tokenize(text, file)
    if diags:
        raise DSLError(diags)
    p = _Parser(tokens)
    try:
        raw = p.expr()
        if p.tok.kind is not Tok.EOF:
            if p.at(")"):
                raise _SyntaxError(p.tok, "unbalanced parentheses: unexpected ')'")
            raise _SyntaxError(p.tok, f"expected an operator, found {_describe(p.tok)}")
    except _SyntaxError as exc:
        raise DSLError([_diag(exc.token.span, _syntax_message(exc.message))]) from None
    expr = _resolve(raw, None if situations is None else set(situations), set(processes), diags)
    if diags:
        raise DSLError(diags)
    return expr


def _syntax_message(message: str) -> str:
    return message if message.startswith("unbalanced") else "syntax error: " + message


def parse_model(text: str, file: str = "<input>") -> CausalFactorModel:
    """Parse and validate a model; raises :class:`DSLError` on any error."""
    text = text.replace("\r\n", "\n")
    tokens, diags = tokenize(text, file)
    p = _Parser(tokens)
    spans: dict[tuple, SourceSpan] = {}
    factors: dict[str, CausalFactor] = {}
    situations: dict[str, tuple[Situation, list[Token]]] = {}
    scoped: list[tuple[Optional[Token], Constraint, SourceSpan, Token, Token]] = []
    raw_processes: dict[str, object] = {}
    root: Optional[Token] = None

    def duplicate(t: Token, what: str) -> None:
        diags.append(_diag(t.span, f"duplicate identifier: {what} {t.text!r} is already declared"))

    while p.tok.kind is not Tok.EOF:
        start = p.tok
        try:
            if p.accept("version"):
                v = p.tok
                if v.kind is not Tok.NUMBER:
                    raise _SyntaxError(v, f"expected a version number, found {_describe(v)}")
                p.advance()
                if int(v.text) != FORMAT_VERSION:
                    raise _SyntaxError(v, f"unsupported format version {v.text}")
                p.expect(";")
            elif p.accept("factor"):
                t = p.ident("a factor id")
                f = _factor_body(p, t.text)
                p.expect(";")
                if t.text in factors:
                    duplicate(t, "factor")
                else:
                    factors[t.text] = f
                    spans[("factor", t.text)] = t.span
            elif p.accept("situation"):
                t = p.ident("a situation id")
                kind = SituationKind.ASPECT if p.accept("aspect") else SituationKind.ATOMIC
                members: list[Token] = []
                if p.accept("factors"):
                    p.expect("{")
                    if not p.at("}"):
                        members.append(p.ident("a factor id"))
                        while p.accept(","):
                            members.append(p.ident("a factor id"))
                    p.expect("}")
                p.expect(";")
                if t.text in situations or t.text in raw_processes:
                    duplicate(t, "situation")
                else:
                    situations[t.text] = (Situation(t.text, kind), members)
                    spans[("situation", t.text)] = t.span
            elif p.accept("constraint"):
                scope = None
                if p.accept("in"):
                    scope = p.ident("a situation id")
                left = p.ident("a factor id")
                kw = p.ident("a constraint keyword")
                try:
                    kind = ConstraintKind(kw.text)
                except ValueError:
                    raise _SyntaxError(kw, "expected requires, causes, denies or excludes") from None
                right = p.ident("a factor id")
                p.expect(";")
                scoped.append((scope, Constraint(kind, left.text, right.text), start.span, left, right))
            elif p.accept("process"):
                t = p.ident("a process name")
                p.expect("=")
                body = p.expr()
                if not p.at(";"):
                    if p.at(")"):
                        raise _SyntaxError(p.tok, "unbalanced parentheses: unexpected ')'")
                    raise _SyntaxError(p.tok, f"expected ';', found {_describe(p.tok)}")
                p.advance()
                if t.text in raw_processes or t.text in situations:
                    duplicate(t, "process")
                else:
                    raw_processes[t.text] = body
                    spans[("process", t.text)] = t.span
            elif p.accept("root"):
                t = p.ident("a process name")
                p.expect(";")
                if root is not None:
                    duplicate(t, "root")
                else:
                    root = t
                    spans[("root",)] = t.span
            else:
                raise _SyntaxError(start, f"expected a declaration, found {_describe(start)}")
        except _SyntaxError as exc:
            diags.append(_diag(exc.token.span, _syntax_message(exc.message)))
            p.recover()

    # Situations may be declared after the processes that mention them.
    for name in list(raw_processes):
        if name in situations:
            duplicate(Token(Tok.IDENT, name, spans[("process", name)]), "process")
            del raw_processes[name]

    def known_factor(t: Token) -> bool:
        if t.text not in factors:
            diags.append(_diag(t.span, f"unknown reference: no factor named {t.text!r}"))
            return False
        return True

    global_constraints: set[Constraint] = set()
    local: dict[str, set[Constraint]] = {s: set() for s in situations}
    for scope, c, span, left, right in scoped:
        ok = known_factor(left) & known_factor(right)
        if scope is not None and scope.text not in situations:
            diags.append(_diag(scope.span, f"unknown reference: no situation named {scope.text!r}"))
            ok = False
        if not ok:
            continue
        where = scope.text if scope is not None else ""
        spans.setdefault(("constraint", where, c), span)
        spans.setdefault(("pair", where, c.left, c.right), span)
        (local[scope.text] if scope is not None else global_constraints).add(c)

    built_situations: dict[str, Situation] = {}
    for sid, (s, members) in situations.items():
        ids = {t.text for t in members if known_factor(t)}
        built_situations[sid] = Situation(sid, s.kind, frozenset(ids), frozenset(local[sid]))

    processes = {
        name: _resolve(body, set(situations), set(raw_processes), diags) for name, body in raw_processes.items()
    }
    if root is not None and root.text not in processes:
        diags.append(_diag(root.span, f"unknown reference: no process named {root.text!r}"))
        root = None

    model = CausalFactorModel(
        factors=factors,
        situations=built_situations,
        processes=processes,
        root=root.text if root is not None else None,
        global_constraints=frozenset(global_constraints),
    )
    if not any(d.severity is Severity.ERROR for d in diags):
        eof_span = tokens[-1].span
        for d in validate(model):
            span = spans.get(d.subject)
            if span is None and d.subject and d.subject[0] == "pair":
                span = spans.get(("pair", "", d.subject[2], d.subject[3]))
            diags.append(_diag(span or eof_span, f"invalid model: {d.location}: {d.message}", d.severity))
    if any(d.severity is Severity.ERROR for d in diags):
        diags.sort(key=lambda d: (d.span.line, d.span.column))
        raise DSLError(diags)
    return model


def _factor_body(p: _Parser, fid: str) -> CausalFactor:
    name = None
    if p.tok.kind is Tok.STRING:
        name = p.advance().text
    p.expect("class")
    cls_tok = p.ident("an endangerment class")
    try:
        endangerment = EndangermentClass(cls_tok.text)
    except ValueError:
        raise _SyntaxError(cls_tok, "expected endangerment class f, d, mu or nm") from None
    fields: dict[str, object] = {}
    mitigation = mechanism = None
    while p.tok.kind is Tok.IDENT and p.tok.text in (*FACTOR_FLAGS, "mitigation"):
        t = p.advance()
        if t.text == "mitigation":
            if mitigation is not None:
                raise _SyntaxError(t, "mitigation given twice")
            m_tok = p.ident("a mitigation class")
            try:
                mitigation = MitigationClass(m_tok.text)
            except ValueError:
                choices = ", ".join(m.value for m in MitigationClass)
                raise _SyntaxError(m_tok, f"expected mitigation class ({choices})") from None
            if p.accept("by"):
                mechanism = p.ident("a mechanism id").text
        else:
            field = _FLAG_FIELDS[t.text]
            if field in fields:
                raise _SyntaxError(t, f"flag {t.text!r} given twice")
            fields[field] = True
    return CausalFactor(fid, endangerment, name=name, mitigation=mitigation, mechanism=mechanism, **fields)


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_factor(f: CausalFactor) -> str:
    parts = ["factor", f.id]
    if f.name is not None:
        parts.append(_quote(f.name))
    parts += ["class", f.endangerment.value]
    parts += [flag for flag in FACTOR_FLAGS if getattr(f, _FLAG_FIELDS[flag])]
    if f.mitigation is not None or f.mechanism is not None:
        parts += ["mitigation", f.mitigation_class.value]
        if f.mechanism is not None:
            parts += ["by", f.mechanism]
    return " ".join(parts) + ";"


def serialize_model(model: CausalFactorModel) -> str:
    """Canonical text of ``model``: declarations sorted by id, one per line."""
    problems = [d for d in validate(model) if d.severity is Severity.ERROR]
    if problems:
        raise ValueError("cannot serialize an invalid model: " + "; ".join(map(str, problems)))
    lines = [HEADER]
    for fid in sorted(model.factors):
        lines.append(format_factor(model.factors[fid]))
    for sid in sorted(model.situations):
        s = model.situations[sid]
        line = f"situation {sid}" + (" aspect" if s.is_aspect else "")
        if s.factors:
            line += " factors {" + ", ".join(sorted(s.factors)) + "}"
        lines.append(line + ";")
    for c in sorted(model.global_constraints, key=Constraint.sort_key):
        lines.append(f"constraint {c};")
    for sid in sorted(model.situations):
        for c in sorted(model.situations[sid].constraints, key=Constraint.sort_key):
            lines.append(f"constraint in {sid} {c};")
    for name in sorted(model.processes):
        lines.append(f"process {name} = {format_expr(model.processes[name])};")
    if model.root is not None:
        lines.append(f"root {model.root};")
    return "\n".join(lines) + "\n"


def load_model(path: Union[str, Path]) -> CausalFactorModel:
    path = Path(path)
    return parse_model(path.read_bytes().decode("utf-8"), file=str(path))
