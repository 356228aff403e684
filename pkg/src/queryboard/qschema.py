"""Typing and schema inference over choice trees.

Three layers:

- a small *type lattice* ``num ⊂ str ⊂ ast`` with catalogue attributes
  (``Attr``) specializing their base primitive,
- *node schemas*: per choice node, an ordered tuple of type expressions
  (``Or``/``Optional``/``Star``/``Nested``) describing the structural
  variation the node expresses,
- *result schemas*: the output-column list of a whole tree, defined when every
  expressible variant agrees on arity (union compatibility).

``analyze`` performs one scoped pass over a tree: it resolves column
references against the catalogue (through FROM aliases, derived tables, and
correlated outer scopes), types literals and choice nodes — specializing
comparison operands to the compared column's attribute — and records the
grouping/pinning facts that functional-dependency checks need.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .catalogue import Attr, Catalogue, Table
from .nodes import ANY, AST, COOPT, MULTI, SUBSET, VAL, CHOICE_KINDS, Node, contains_choice, walk

AST_T = "ast"
STR_T = "str"
NUM_T = "num"

_LADDER = {NUM_T: 0, STR_T: 1, AST_T: 2}


class UnknownAttribute(Exception):
    """A column reference resolved to nothing in scope."""


def prim_of(t) -> str:
    return t.primitive if isinstance(t, Attr) else t


def type_union(a, b):
    """Least common ancestor in the type lattice."""
    if a == b:
        return a
    pa, pb = prim_of(a), prim_of(b)
    return pa if _LADDER[pa] >= _LADDER[pb] else pb


def is_subtype(a, b) -> bool:
    """Domain-subset compatibility: may values of ``a`` stand where ``b`` is expected?"""
    if a == b:
        return True
    if isinstance(b, Attr):
        return False  # only the identical attribute's domain is inside it
    return _LADDER[prim_of(a)] <= _LADDER[b]


def is_categorical(t) -> bool:
    """C-channel eligibility of a type."""
    if isinstance(t, Attr):
        return t.categorical
    return t == STR_T


def is_quantitative(t) -> bool:
    return prim_of(t) == NUM_T


# --- type expressions ------------------------------------------------------


@dataclass(frozen=True)
class Or:
    options: tuple


@dataclass(frozen=True)
class Opt:
    inner: object


@dataclass(frozen=True)
class Star:
    inner: object


@dataclass(frozen=True)
class Nested:
    schema: tuple


WILDCARD = "_"


def node_schema(node: Node, types: dict) -> tuple:
    """Ordered type expressions for the variation under ``node``."""
    if node.kind == AST:
        out: list = []
        for child in node.children:
            if contains_choice(child):
                out.extend(node_schema(child, types))
        return tuple(out)
    if node.kind == COOPT:
        return node_schema(node.children[0], types)
    if node.kind == VAL:
        return (types.get(node.node_id, node.littype),)
    if node.kind == ANY:
        if node.is_optional:
            return (Opt(_inner(node.optional_body, types)),)
        if not any(contains_choice(c) for c in node.children):
            folded = _static_type(node.children[0], types)
            for child in node.children[1:]:
                folded = type_union(folded, _static_type(child, types))
            return (folded,)
        return (
            Or(
                tuple(
                    Nested(node_schema(c, types)) if contains_choice(c) else _static_type(c, types)
                    for c in node.children
                )
            ),
        )
    if node.kind == MULTI:
        return (Star(_inner(node.children[0], types)),)
    if node.kind == SUBSET:
        return tuple(Opt(_inner(c, types)) for c in node.children)
    raise ValueError(node.kind)


def _static_type(node: Node, types: dict):
    return types.get(node.node_id, node.littype if node.label == "lit" else AST_T)


def _inner(node: Node, types: dict):
    """Schema of a wrapped child, unwrapped when it is a single expression."""
    if not contains_choice(node) and node.kind == AST:
        return _static_type(node, types)
    schema = node_schema(node, types)
    return schema[0] if len(schema) == 1 else Nested(schema)


def expr_compatible(e, t) -> bool:
    """Does node-schema expression ``e`` fit template expression ``t``?"""
    if t == WILDCARD:
        return not isinstance(e, (Opt, Star))
    if isinstance(t, Opt):
        return isinstance(e, Opt) and expr_compatible(e.inner, t.inner)
    if isinstance(t, Star):
        return isinstance(e, Star) and expr_compatible(e.inner, t.inner)
    if isinstance(t, Nested):
        return (
            isinstance(e, Nested)
            and len(e.schema) == len(t.schema)
            and all(expr_compatible(a, b) for a, b in zip(e.schema, t.schema))
        )
    # t is a plain type
    if isinstance(e, Or):
        return all(expr_compatible(o, t) for o in e.options)
    if isinstance(e, (Opt, Star, Nested)):
        return False
    return is_subtype(e, t)


def schema_compatible(schema: tuple, template: tuple) -> bool:
    return len(schema) == len(template) and all(
        expr_compatible(e, t) for e, t in zip(schema, template)
    )


# --- result schemas and tree analysis --------------------------------------


@dataclass(frozen=True)
class ColumnInfo:
    """One output column: display names, lattice type, provenance."""

    names: frozenset
    type: object
    attr: Attr | None = None  # direct column pass-through, if any
    aggregate: bool = False

    @property
    def label(self) -> str:
        return "∪".join(sorted(self.names))

    @property
    def cluster_key(self):
        if self.attr is not None:
            return ("attr", self.attr.table, self.attr.column)
        t = self.type
        if isinstance(t, Attr):
            return ("syn", t.table, t.column, t.primitive)
        return ("prim", t, tuple(sorted(self.names)))


@dataclass
class SelectInfo:
    """Facts about one SELECT variant (a branch of the tree root)."""

    columns: list[ColumnInfo]
    group_attrs: list[Attr]
    pinned: set[Attr]
    tables: list[Table]  # outer FROM base tables found in the catalogue
    distinct: bool


@dataclass
class TreeAnalysis:
    types: dict[int, object]
    branches: list[SelectInfo]
    result: tuple[ColumnInfo, ...] | None  # None = undefined (arity varies)

    @property
    def cluster_key(self):
        if self.result is None:
            return None
        return tuple(c.cluster_key for c in self.result)

    def fd_holds(self, determinants: set[int], dependent: int) -> bool:
        """Do the determinant result columns fix the dependent column's value?"""
        if dependent in determinants:
            return True
        if self.result is None:
            return False
        for branch in self.branches:
            det_attrs = {branch.columns[i].attr for i in determinants} - {None}
            if branch.group_attrs:
                if set(branch.group_attrs) <= det_attrs:
                    continue
            if branch.distinct and set(range(len(branch.columns))) <= determinants:
                continue
            if not branch.group_attrs and len(branch.tables) == 1:
                table = branch.tables[0]
                if table.key:
                    residual = [
                        table.column(k)
                        for k in table.key
                        if table.column(k) not in branch.pinned
                    ]
                    if all(attr in det_attrs for attr in residual):
                        continue
            return False
        return True


def analyze(root: Node, cat: Catalogue) -> TreeAnalysis:
    """Type a tree and compute its result schema and FD facts."""
    types: dict[int, object] = {}
    branches: list[SelectInfo] = []
    for select in _root_selects(root):
        branches.append(_analyze_select(select, cat, (), types))
    result = _fold_columns(branches)
    return TreeAnalysis(types, branches, result)


def _root_selects(root: Node):
    if root.label == "select":
        yield root
        return
    if root.kind in (ANY, COOPT):
        for child in root.children:
            if not child.is_nil:
                yield from _root_selects(child)
        return
    raise ValueError(f"unexpected tree root {root.kind}:{root.label}")


def _fold_columns(branches: list[SelectInfo]) -> tuple[ColumnInfo, ...] | None:
    if not branches or any(b.columns is None for b in branches):
        return None
    arities = {len(b.columns) for b in branches}
    if len(arities) != 1:
        return None
    folded = list(branches[0].columns)
    for branch in branches[1:]:
        for i, col in enumerate(branch.columns):
            folded[i] = _merge_col(folded[i], col)
    return tuple(folded)


def union_compatible(a: tuple | None, b: tuple | None) -> bool:
    """May two result schemas fold into one (equal arity, per-column LCA below ast)?"""
    if a is None or b is None or len(a) != len(b):
        return False
    return all(type_union(x.type, y.type) != AST_T for x, y in zip(a, b))


def _merge_col(a: ColumnInfo, b: ColumnInfo) -> ColumnInfo:
    return ColumnInfo(
        names=a.names | b.names,
        type=type_union(a.type, b.type),
        attr=a.attr if a.attr == b.attr else None,
        aggregate=a.aggregate or b.aggregate,
    )


# --- scoped analysis of one select ----------------------------------------


@dataclass
class _Derived:
    """A FROM-clause subquery acting as an anonymous table."""

    columns: dict[str, object]  # lower-cased name -> Attr | primitive

    def column(self, name: str):
        return self.columns.get(name.lower())


def _derived_info(body: Node, cat: Catalogue, outer: tuple, types: dict) -> SelectInfo:
    """Typing view of a FROM-clause subquery.

    Tolerates a choice over select variants (the transient shape while a
    choice is pushed through the derived-table wrapper) as long as every
    variant exposes the same column list.
    """

    if body.label == "select":
        return _analyze_select(body, cat, outer, types)
    if body.kind == ANY and body.children and all(
        c.label == "select" for c in body.children
    ):
        infos = [_analyze_select(c, cat, outer, types) for c in body.children]
        shapes = {tuple(c.cluster_key for c in info.columns) for info in infos}
        if len(shapes) == 1:
            return infos[0]
    raise UnknownAttribute("derived table without a fixed shape")


def _analyze_select(select: Node, cat: Catalogue, outer: tuple, types: dict) -> SelectInfo:
    distinct_slot, items, tables, where, group, having = select.children
    frame: list[tuple[str | None, object]] = []
    base_tables: list[Table] = []
    for tnode in (n for n in walk(tables) if n.label == "table"):
        body, alias = tnode.children
        name = alias.payload.lower() if not alias.is_nil else None
        if body.label == "tname":
            table = cat.table(body.payload)
            if table is None:
                raise UnknownAttribute(f"unknown table {body.payload}")
            base_tables.append(table)
            frame.append((name or body.payload.lower(), table))
        else:  # derived subquery
            inner = _derived_info(body, cat, outer, types)
            cols: dict[str, object] = {}
            for col in inner.columns:
                for cname in col.names:
                    cols[cname.lower()] = col.attr if col.attr is not None else col.type
            frame.append((name, _Derived(cols)))
    scopes = (tuple(frame),) + outer

    pinned: set[Attr] = set()
    _type_region(where, cat, scopes, types, pinned, certain=True)
    _type_region(having, cat, scopes, types, set(), certain=True)

    columns = _project_columns(items, cat, scopes, types)

    group_attrs = []
    for n in walk(group):
        if n.label == "col":
            attr = _resolve_col(n.payload, scopes)
            types[n.node_id] = attr
            group_attrs.append(attr)
    return SelectInfo(
        columns=columns,
        group_attrs=[a for a in group_attrs if isinstance(a, Attr)],
        pinned=pinned,
        tables=base_tables,
        distinct=not distinct_slot.is_nil,
    )


def _resolve_col(payload: str, scopes):
    if "." in payload:
        qual, col = payload.split(".", 1)
        for frame in scopes:
            for name, table in frame:
                if name == qual.lower():
                    attr = table.column(col)
                    if attr is None:
                        raise UnknownAttribute(payload)
                    return attr
        raise UnknownAttribute(payload)
    for frame in scopes:
        for _, table in frame:
            attr = table.column(payload)
            if attr is not None:
                return attr
    raise UnknownAttribute(payload)


def _item_sequences(node: Node) -> list[tuple[Node, ...]] | None:
    """Fixed-arity alternatives of a projection slot; None if arity can vary."""
    if node.kind == ANY:
        out: list[tuple[Node, ...]] = []
        for c in node.children:
            sub = _item_sequences(c)
            if sub is None:
                return None
            out.extend(sub)
        return out or None
    if node.kind == AST and node.label == "items":
        return [tuple(node.children)]
    if node.kind == AST and node.label == "item":
        return [(node,)]
    return None  # nil, vanishing regions, and variable-length lists


def _project_columns(items: Node, cat: Catalogue, scopes, types) -> list[ColumnInfo] | None:
    seqs = _item_sequences(items)
    if seqs is None:
        return None
    folded: list[ColumnInfo] | None = None
    for seq in seqs:
        infos = []
        for el in seq:
            info = _item_info(el, cat, scopes, types)
            if info is None:
                return None
            infos.append(info)
        if folded is None:
            folded = infos
        elif len(folded) != len(infos):
            return None
        else:
            folded = [_merge_col(a, b) for a, b in zip(folded, infos)]
    return folded


def _item_info(node: Node, cat: Catalogue, scopes, types) -> ColumnInfo | None:
    if node.kind == ANY:
        infos = []
        for c in node.children:
            if c.is_nil:
                return None  # a column that can vanish has no fixed schema
            info = _item_info(c, cat, scopes, types)
            if info is None:
                return None
            infos.append(info)
        folded = infos[0]
        for info in infos[1:]:
            folded = _merge_col(folded, info)
        return folded
    if node.kind != AST or node.label != "item":
        return None
    body, alias = node.children
    info = _expr_info(body, cat, scopes, types)
    if not alias.is_nil:
        info = ColumnInfo(frozenset({alias.payload}), info.type, info.attr, info.aggregate)
    return info


def _expr_info(body: Node, cat: Catalogue, scopes, types) -> ColumnInfo:
    if body.kind == ANY:
        infos = [_expr_info(c, cat, scopes, types) for c in body.children if not c.is_nil]
        folded = infos[0]
        for info in infos[1:]:
            folded = _merge_col(folded, info)
        return folded
    if body.label == "col":
        attr = _resolve_col(body.payload, scopes)
        types[body.node_id] = attr
        name = body.payload.split(".")[-1]
        if isinstance(attr, Attr):
            return ColumnInfo(frozenset({name}), attr, attr=attr)
        return ColumnInfo(frozenset({name}), attr)  # derived primitive
    if body.label == "lit":
        return ColumnInfo(frozenset({body.payload}), body.littype)
    if body.label == "star":
        raise ValueError("bare * not supported in result schemas")
    if body.label == "call":
        return _call_info(body, cat, scopes, types)
    if body.label in ("cmp", "between", "in"):
        # predicate-valued column: boolean 0/1 domain
        _type_region(body, cat, scopes, types, set(), certain=True)
        syn = Attr(
            table="",
            column=_pred_name(body),
            primitive=NUM_T,
            lo=0,
            hi=1,
            distinct_count=2,
            unique=False,
            values=(0, 1),
        )
        return ColumnInfo(frozenset({_pred_name(body)}), syn)
    raise ValueError(f"unsupported select expression {body.label}")


def _pred_name(body: Node) -> str:
    col = next((n.payload for n in walk(body) if n.label == "col"), "flag")
    return f"{body.label}_{col.split('.')[-1]}"


def _call_info(body: Node, cat: Catalogue, scopes, types) -> ColumnInfo:
    fname = body.payload.lower()
    (args,) = body.children
    arg_cols = [n for n in walk(args) if n.label == "col"]
    for n in arg_cols:
        types[n.node_id] = _resolve_col(n.payload, scopes)
    if fname == "count":
        syn = Attr(table="", column="count", primitive=NUM_T)
        return ColumnInfo(frozenset({"count"}), syn, aggregate=True)
    if fname in ("sum", "avg", "min", "max", "total"):
        suffix = arg_cols[0].payload.split(".")[-1] if arg_cols else "expr"
        syn = Attr(table="", column=f"{fname}_{suffix}", primitive=NUM_T)
        return ColumnInfo(frozenset({fname}), syn, aggregate=True)
    # scalar functions (date arithmetic and friends) read as strings
    return ColumnInfo(frozenset({fname}), STR_T)


# --- predicate typing ------------------------------------------------------


def _type_region(node: Node, cat: Catalogue, scopes, types, pinned: set, certain: bool) -> None:
    """Type predicates under ``node``, descending through choice nodes."""
    if node.is_nil:
        return
    if node.kind in (ANY, SUBSET):
        sure = certain and len([c for c in node.children if not c.is_nil]) == 1
        for child in node.children:
            _type_region(child, cat, scopes, types, pinned, sure)
        return
    if node.kind in (MULTI, COOPT):
        for child in node.children:
            _type_region(child, cat, scopes, types, pinned, False)
        return
    if node.kind == VAL:
        return
    if node.label == "cmp":
        left, right = node.children
        self_typed = _type_comparison(left, right, node.payload, cat, scopes, types, pinned, certain)
        if not self_typed:
            _descend_region(node, cat, scopes, types, pinned, certain)
        return
    if node.label == "between":
        operand, pair = node.children
        if operand.label == "col":
            attr = _resolve_col(operand.payload, scopes)
            types[operand.node_id] = attr
            for end in pair.children:
                _specialize(end, attr, types)
        _descend_region(pair, cat, scopes, types, pinned, certain)
        return
    if node.label == "in":
        operand, elems = node.children
        if operand.label == "col":
            attr = _resolve_col(operand.payload, scopes)
            types[operand.node_id] = attr
            _specialize(elems, attr, types)
        return
    if node.label == "select":
        _analyze_select(node, cat, scopes, types)
        return
    if node.label == "col":
        types.setdefault(node.node_id, _resolve_col(node.payload, scopes))
        return
    _descend_region(node, cat, scopes, types, pinned, certain)


def _descend_region(node: Node, cat, scopes, types, pinned, certain) -> None:
    for child in node.children:
        _type_region(child, cat, scopes, types, pinned, certain)


def _type_comparison(left, right, op, cat, scopes, types, pinned, certain) -> bool:
    lcol = left.label == "col"
    rcol = right.label == "col"
    if lcol and not rcol:
        col, other = left, right
    elif rcol and not lcol:
        col, other = right, left
    else:
        if lcol and rcol:
            types[left.node_id] = _resolve_col(left.payload, scopes)
            types[right.node_id] = _resolve_col(right.payload, scopes)
            return True
        return False
    attr = _resolve_col(col.payload, scopes)
    types[col.node_id] = attr
    specialized = _specialize(other, attr, types)
    if not specialized:
        _type_region(other, cat, scopes, types, pinned, certain)
    if op == "=" and specialized and certain and isinstance(attr, Attr):
        pinned.add(attr)
    return specialized


def _specialize(node: Node, attr, types) -> bool:
    """Assign the compared column's type to literal-like nodes underneath."""
    if not isinstance(attr, Attr):
        return False
    if node.kind == VAL or node.label == "lit":
        if _prim_matches(node.littype, attr):
            types[node.node_id] = attr
            return True
        return False
    if node.kind in (ANY, MULTI, SUBSET):
        hits = [
            _specialize(c, attr, types) for c in node.children if not c.is_nil
        ]
        return bool(hits) and all(hits)
    if node.label in ("pair", "inlist"):
        hits = [_specialize(c, attr, types) for c in node.children]
        return bool(hits) and all(hits)
    return False


def _prim_matches(littype: str | None, attr: Attr) -> bool:
    return littype is not None and _LADDER[littype] <= _LADDER[attr.primitive]
