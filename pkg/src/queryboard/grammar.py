"""SQL subset parser: annotated PEG grammar -> labeled AST, and back to text.

The grammar lives in ``assets/sql.peg``.  Annotations on its rules drive node
construction here; a handful of rules (select, cmp, call, ...) get bespoke
shapes so downstream code sees a stable six-slot select and payload-carrying
operators.  ``unparse`` renders an AST back to canonical lowercase SQL that
re-parses to a structurally identical tree.
"""

from __future__ import annotations

from importlib.resources import files

from . import peg
from .nodes import AST, Node, ast, nil, render

ParseError = peg.ParseError

_GRAMMAR_TEXT = files("queryboard").joinpath("assets/sql.peg").read_text()
_RULES = peg.load_grammar(_GRAMMAR_TEXT)

#: rule-name -> primitive type, per the grammar's @type annotations
TYPE_ANNOTATIONS = {
    name: rule.annotations["type"]
    for name, rule in _RULES.items()
    if "type" in rule.annotations
}

_SELECT_SLOTS = ("distinct", "items", "tables", "conj", "cols", "hconj")


def _special(label: str, values: list[Node]) -> Node:
    if label == "select":
        by_label = {v.label: v for v in values}
        return ast("select", tuple(by_label.get(slot, nil()) for slot in _SELECT_SLOTS))
    if label in ("item", "table"):
        body = values[0]
        alias = values[1] if len(values) > 1 else nil()
        return ast(label, (body, alias))
    if label == "cmp":
        left, op, right = values
        return ast("cmp", (left, right), payload=op.payload)
    if label == "between":
        operand, lo, hi = values
        return ast("between", (operand, ast("pair", (lo, hi))))
    if label == "in":
        operand, inlist = values
        return ast("in", (operand, inlist))
    if label == "call":
        fname = values[0]
        callargs = values[1] if len(values) > 1 else ast("args")
        return ast("call", (callargs,), payload=fname.payload)
    return ast(label, tuple(values))


def _build(rule: peg.Rule, text: str, values: list):
    ann = rule.annotations
    if "leaf" in ann:
        payload = text.strip()
        littype = ann.get("type")
        if littype == "str":
            payload = payload[1:-1]
        return Node(AST, ann["leaf"], (), payload, littype)
    if "list" in ann:
        return ast(ann["list"], tuple(values))
    if "node" in ann:
        return _special(ann["node"], values)
    return values


_PARSER = peg.Parser(_RULES, _build)


def parse_query(sql: str) -> Node:
    """Parse one SQL query into a labeled AST.

    Raises ParseError (with offset and expected-terminal set) on bad input.
    """
    return _PARSER.parse(sql)


def parse_log(text: str) -> list[Node]:
    """Parse a query log: ``;``-separated statements, ``--`` line comments."""
    lines = [line.split("--", 1)[0] for line in text.splitlines()]
    out = []
    for stmt in "\n".join(lines).split(";"):
        if stmt.strip():
            out.append(parse_query(stmt))
    return out


def unparse(node: Node) -> str:
    """Render a choice-free AST back to executable SQL text."""
    return render(node)
