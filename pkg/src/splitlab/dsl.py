"""Parser and printer for the scheme description language.

Example::

    # revised EAMv1 coupling
    scheme eam_revised {
      stage a: A from base
      stage b: B from base
      stage c: C from base + 1*a + 1*b
      output: base + a + b + c
    }

One statement per line, ``#`` starts a comment.  Coefficients are integers
or fractions ``p/q``.  The output clause is optional; when present, stages
it does not list get weight 0.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .schemes import InputExpr, SchemeSpec, Stage

__all__ = ["SchemeSyntaxError", "parse_scheme", "format_scheme"]


class SchemeSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


_TOKEN_RE = re.compile(
    r"""
    (?P<WS>[ \t\r]+)
  | (?P<COMMENT>\#[^\n]*)
  | (?P<NEWLINE>\n)
  | (?P<INT>-?[0-9]+)
  | (?P<IDENT>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<PUNCT>[{}:+*/])
    """,
    re.VERBOSE,
)

KEYWORDS = {"scheme", "stage", "from", "base", "output"}


def tokenize(text: str) -> list:
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise SchemeSyntaxError(f"unknown token {text[pos]!r}", line, col)
        kind = m.lastgroup
        if kind == "NEWLINE":
            tokens.append(Token("NEWLINE", "\n", line, col))
            line += 1
            line_start = m.end()
        elif kind == "IDENT" and m.group() in KEYWORDS:
            tokens.append(Token(m.group(), m.group(), line, col))
        elif kind == "PUNCT":
            tokens.append(Token(m.group(), m.group(), line, col))
        elif kind not in ("WS", "COMMENT"):
            tokens.append(Token(kind, m.group(), line, col))
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return SchemeSyntaxError(msg, tok.line, tok.column)

    def expect(self, kind: str) -> Token:
        tok = self.tok
        if tok.kind != kind:
            found = "end of input" if tok.kind == "EOF" else repr(tok.text)
            raise self.error(f"expected {kind!r}, found {found}")
        self.i += 1
        return tok

    def accept(self, kind: str):
        if self.tok.kind == kind:
            self.i += 1
            return True
        return False

    def skip_newlines(self):
        while self.accept("NEWLINE"):
            pass

    def end_statement(self):
        # a statement ends at a newline or right before the closing brace
        if self.tok.kind == "}":
            return
        self.expect("NEWLINE")
        self.skip_newlines()

    def rational(self) -> Fraction:
        num = self.expect("INT")
        if self.accept("/"):
            den = self.expect("INT")
            if int(den.text) <= 0:
                raise self.error("denominator must be a positive integer", den)
            return Fraction(int(num.text), int(den.text))
        return Fraction(int(num.text))

    def parse(self) -> SchemeSpec:
        self.skip_newlines()
        self.expect("scheme")
        name = self.expect("IDENT").text
        self.expect("{")
        self.skip_newlines()
        stages = []  # (id, process, terms, token)
        output = None
        while self.tok.kind == "stage":
            stages.append(self.stage())
            self.end_statement()
        if self.tok.kind == "output":
            output = self.output()
            self.end_statement()
        if self.tok.kind != "}":
            found = "end of input" if self.tok.kind == "EOF" else repr(self.tok.text)
            raise self.error(f"expected 'stage', 'output' or '}}', found {found}")
        self.i += 1
        self.skip_newlines()
        self.expect("EOF")
        return self.build(name, stages, output)

    def stage(self):
        self.expect("stage")
        sid = self.expect("IDENT")
        self.expect(":")
        process = self.expect("IDENT").text
        self.expect("from")
        self.expect("base")
        terms = []
        while self.accept("+"):
            coef = self.rational()
            self.expect("*")
            ref = self.expect("IDENT")
            terms.append((ref, coef))
        return sid, process, terms

    def output(self):
        self.expect("output")
        self.expect(":")
        self.expect("base")
        terms = []
        while self.accept("+"):
            coef = Fraction(1)
            if self.tok.kind == "INT":
                coef = self.rational()
                self.expect("*")
            terms.append((self.expect("IDENT"), coef))
        return terms

    def build(self, name, stages, output) -> SchemeSpec:
        ids = [sid.text for sid, _, _ in stages]
        seen = set()
        built = []
        for sid, process, terms in stages:
            if sid.text in seen:
                raise self.error(f"duplicate stage id {sid.text!r}", sid)
            refs = set()
            for ref, _ in terms:
                if ref.text not in seen:
                    what = "forward reference to stage" if ref.text in ids else "reference to unknown stage"
                    raise self.error(f"{what} {ref.text!r}", ref)
                if ref.text in refs:
                    raise self.error(f"stage {ref.text!r} referenced twice", ref)
                refs.add(ref.text)
            seen.add(sid.text)
            built.append(Stage(sid.text, process, InputExpr((r.text, c) for r, c in terms)))
        weights = None
        if output is not None:
            weights = {}
            for ref, coef in output:
                if ref.text not in seen:
                    raise self.error(f"output references unknown stage {ref.text!r}", ref)
                if ref.text in weights:
                    raise self.error(f"stage {ref.text!r} listed twice in output", ref)
                weights[ref.text] = coef
        return SchemeSpec(name, built, weights)


def parse_scheme(text: str) -> SchemeSpec:
    return _Parser(text).parse()


def _fmt_rational(r: Fraction) -> str:
    return str(r.numerator) if r.denominator == 1 else f"{r.numerator}/{r.denominator}"


def format_scheme(scheme: SchemeSpec) -> str:
    """Render ``scheme`` in the DSL; ``parse_scheme`` inverts it."""
    lines = [f"scheme {scheme.name} {{"]
    for s in scheme.stages:
        expr = "base" + "".join(f" + {_fmt_rational(c)}*{sid}" for sid, c in s.input.terms)
        lines.append(f"  stage {s.id}: {s.process} from {expr}")
    weights = scheme.output_weights
    if any(w != 1 for w in weights.values()):
        parts = [f" + {_fmt_rational(w)}*{sid}" for sid, w in weights.items() if w != 0]
        lines.append("  output: base" + "".join(parts))
    lines.append("}")
    return "\n".join(lines) + "\n"
