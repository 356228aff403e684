"""A small packrat PEG interpreter.

Grammars are plain text: one rule per line, ``name <- expression``, with the
usual PEG operators (sequence, ordered choice ``/``, ``*`` ``+`` ``?``
repetition, ``&``/``!`` lookahead, ``'...'`` literals with an optional ``i``
case-insensitivity suffix, ``[...]`` character classes, ``.`` any-char, and
parentheses).  Rules may carry annotations after ``@``, e.g.::

    number <- '-'? digit+ ('.' digit+)?   @leaf(lit) @type(num)

Annotations drive tree construction (see ``grammar.py``); the interpreter
itself only records them on the rule.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field


class GrammarError(Exception):
    """Raised when the grammar text itself cannot be parsed."""


@dataclass
class ParseError(Exception):
    """Raised when an input string does not match the grammar.

    ``offset`` is the byte offset of the furthest failure; ``expected`` lists
    the terminal descriptions that would have allowed progress there.
    """

    text: str
    offset: int
    expected: tuple[str, ...]

    def __str__(self) -> str:
        line = self.text.count("\n", 0, self.offset) + 1
        col = self.offset - (self.text.rfind("\n", 0, self.offset) + 1) + 1
        snippet = self.text[self.offset : self.offset + 20]
        exp = ", ".join(sorted(set(self.expected))[:8])
        return (
            f"parse error at offset {self.offset} (line {line}, col {col}) "
            f"near {snippet!r}: expected one of {{{exp}}}"
        )


# --- expression tree -------------------------------------------------------


@dataclass(frozen=True)
class _Lit:
    text: str
    ci: bool = False


@dataclass(frozen=True)
class _Class:
    pattern: str  # raw [...] body
    regex: re.Pattern = field(compare=False, repr=False, default=None)  # type: ignore[assignment]


@dataclass(frozen=True)
class _Any:
    pass


@dataclass(frozen=True)
class _Ref:
    name: str


@dataclass(frozen=True)
class _Seq:
    parts: tuple


@dataclass(frozen=True)
class _Choice:
    alts: tuple


@dataclass(frozen=True)
class _Rep:
    inner: object
    min: int  # 0 for * and ?, 1 for +
    max: int | None  # None for * and +, 1 for ?


@dataclass(frozen=True)
class _Look:
    inner: object
    positive: bool


@dataclass
class Rule:
    name: str
    expr: object
    annotations: dict[str, str]


_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<arrow><-)
      | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<lit>'(?:[^'\\]|\\.)*'i?)
      | (?P<cls>\[(?:[^\]\\]|\\.)*\])
      | (?P<op>[()/.*+?&!])
    )""",
    re.VERBOSE,
)


def _tokenize(src: str) -> list[tuple[str, str]]:
    tokens: list[tuple[str, str]] = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if not m or m.end() == pos:
            if src[pos:].strip() == "":
                break
            raise GrammarError(f"bad grammar token at {src[pos:pos+20]!r}")
        pos = m.end()
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))  # type: ignore[arg-type]
    return tokens


class _ExprParser:
    """Recursive-descent parser for a single rule body."""

    def __init__(self, tokens: list[tuple[str, str]]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> tuple[str, str] | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def parse(self) -> object:
        expr = self.choice()
        if self.i != len(self.tokens):
            raise GrammarError(f"trailing grammar tokens: {self.tokens[self.i:]}")
        return expr

    def choice(self) -> object:
        alts = [self.sequence()]
        while self.peek() == ("op", "/"):
            self.i += 1
            alts.append(self.sequence())
        return alts[0] if len(alts) == 1 else _Choice(tuple(alts))

    def sequence(self) -> object:
        parts = []
        while True:
            tok = self.peek()
            if tok is None or tok in (("op", "/"), ("op", ")")):
                break
            parts.append(self.prefixed())
        if not parts:
            return _Seq(())
        return parts[0] if len(parts) == 1 else _Seq(tuple(parts))

    def prefixed(self) -> object:
        tok = self.peek()
        if tok in (("op", "&"), ("op", "!")):
            self.i += 1
            return _Look(self.prefixed(), positive=tok[1] == "&")
        return self.suffixed()

    def suffixed(self) -> object:
        expr = self.primary()
        while True:
            tok = self.peek()
            if tok == ("op", "*"):
                expr, self.i = _Rep(expr, 0, None), self.i + 1
            elif tok == ("op", "+"):
                expr, self.i = _Rep(expr, 1, None), self.i + 1
            elif tok == ("op", "?"):
                expr, self.i = _Rep(expr, 0, 1), self.i + 1
            else:
                return expr

    def primary(self) -> object:
        tok = self.peek()
        if tok is None:
            raise GrammarError("unexpected end of rule")
        kind, text = tok
        self.i += 1
        if kind == "ident":
            return _Ref(text)
        if kind == "lit":
            ci = text.endswith("i")
            body = text[1 : -2 if ci else -1]
            body = body.replace("\\'", "'").replace("\\\\", "\\")
            return _Lit(body, ci)
        if kind == "cls":
            return _Class(text, re.compile(text))
        if (kind, text) == ("op", "("):
            inner = self.choice()
            if self.peek() != ("op", ")"):
                raise GrammarError("unclosed group in grammar")
            self.i += 1
            return inner
        if (kind, text) == ("op", "."):
            return _Any()
        raise GrammarError(f"unexpected grammar token {text!r}")


_ANNOT_RE = re.compile(r"@([a-z_]+)\(([^)]*)\)")


def load_grammar(text: str) -> dict[str, Rule]:
    """Parse grammar text into a rule table (first rule is the start rule)."""
    rules: dict[str, Rule] = {}
    pending: list[str] = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if line[0].isspace() and pending:
            pending[-1] += " " + line.strip()
        else:
            pending.append(line.strip())
    for entry in pending:
        annotations = dict(_ANNOT_RE.findall(entry))
        entry = _ANNOT_RE.sub("", entry).strip()
        if "<-" not in entry:
            raise GrammarError(f"rule without '<-': {entry!r}")
        name, body = entry.split("<-", 1)
        name = name.strip()
        tokens = _tokenize(body)
        expr = _ExprParser(tokens).parse()
        if name in rules:
            raise GrammarError(f"duplicate rule {name!r}")
        rules[name] = Rule(name, expr, annotations)
    if not rules:
        raise GrammarError("empty grammar")
    return rules


class Parser:
    """Packrat matcher over a rule table.

    ``match_rule`` returns ``(end_offset, value)`` where the value is whatever
    the ``builder`` callback produced for each completed rule.  The builder
    receives ``(rule, matched_text, child_values)`` and may return None to
    contribute nothing upward.
    """

    def __init__(self, rules: dict[str, Rule], builder):
        self.rules = rules
        self.builder = builder
        self.start = next(iter(rules))

    def parse(self, text: str, start: str | None = None):
        self.text = text
        self.memo: dict[tuple[str, int], object] = {}
        self.far = 0
        self.far_expected: list[str] = []
        out = self._rule(start or self.start, 0)
        if out is not None:
            end, values = out
            if self._ws(end) == len(text):
                return values[0] if len(values) == 1 else values
        raise ParseError(text, self.far, tuple(self.far_expected))

    # whitespace is implicit between tokens
    def _ws(self, pos: int) -> int:
        text = self.text
        while pos < len(text) and text[pos] in " \t\r\n":
            pos += 1
        return pos

    def _fail(self, pos: int, expected: str) -> None:
        if pos > self.far:
            self.far = pos
            self.far_expected = [expected]
        elif pos == self.far:
            self.far_expected.append(expected)

    def _rule(self, name: str, pos: int):
        key = (name, pos)
        if key in self.memo:
            return self.memo[key]
        rule = self.rules[name]
        self.memo[key] = None  # block left recursion
        out = self._match(rule.expr, pos, name)
        if out is not None:
            end, values = out
            built = self.builder(rule, self.text[pos:end], values)
            if built is None:
                built = []
            elif not isinstance(built, list):
                built = [built]
            out = (end, built)
        self.memo[key] = out
        return out

    def _match(self, expr, pos: int, rulename: str):
        if isinstance(expr, _Lit):
            pos = self._ws(pos)
            text = self.text
            n = len(expr.text)
            got = text[pos : pos + n]
            if got == expr.text or (expr.ci and got.lower() == expr.text.lower()):
                # keywords must not swallow identifier prefixes: 'in'i vs 'instr'
                if expr.ci and expr.text and expr.text[-1].isalpha():
                    nxt = text[pos + n : pos + n + 1]
                    if nxt.isalnum() or nxt == "_":
                        self._fail(pos, repr(expr.text))
                        return None
                return pos + n, []
            self._fail(pos, repr(expr.text))
            return None
        if isinstance(expr, _Class):
            # character classes are raw: no whitespace skipping
            m = expr.regex.match(self.text, pos)
            if m and m.end() > pos:
                return m.end(), []
            if m:  # zero-width match counts
                return pos, []
            self._fail(pos, expr.pattern)
            return None
        if isinstance(expr, _Any):
            if pos < len(self.text):
                return pos + 1, []
            self._fail(pos, "<any>")
            return None
        if isinstance(expr, _Ref):
            return self._rule(expr.name, self._ws(pos) if self._is_token(expr.name) else pos)
        if isinstance(expr, _Seq):
            values: list = []
            cur = pos
            for part in expr.parts:
                out = self._match(part, cur, rulename)
                if out is None:
                    return None
                cur, vs = out
                values.extend(vs)
            return cur, values
        if isinstance(expr, _Choice):
            for alt in expr.alts:
                out = self._match(alt, pos, rulename)
                if out is not None:
                    return out
            return None
        if isinstance(expr, _Rep):
            values: list = []
            cur = pos
            count = 0
            while expr.max is None or count < expr.max:
                out = self._match(expr.inner, cur, rulename)
                if out is None or out[0] == cur and count > 0:
                    break
                cur, vs = out
                values.extend(vs)
                count += 1
            if count < expr.min:
                return None
            return cur, values
        if isinstance(expr, _Look):
            out = self._match(expr.inner, pos, rulename)
            ok = out is not None
            if ok == expr.positive:
                return pos, []
            return None
        raise TypeError(f"unknown grammar expression {expr!r}")

    def _is_token(self, name: str) -> bool:
        # token-level rules (leaves) handle their own whitespace by regex
        return "leaf" in self.rules[name].annotations or "token" in self.rules[name].annotations
