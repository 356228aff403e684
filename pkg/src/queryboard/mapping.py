"""Mapping choice trees onto visualizations, widgets, and linked gestures.

Each tree draws as one visualization picked from a schema registry; the
trees' choice nodes are then exactly covered by controls.  A control is
either a widget instantiated from the declarative template registry
(``assets/widgets.json``) or a gesture (click, brush, pan/zoom) hosted on
one of the charts and routed to choice nodes — gestures that filter, by
design, target nodes in *other* trees, so charts cross-filter each other.

``search_vm`` enumerates visualization assignments and runs a depth-first
branch-and-bound over gesture covers, completing each partial cover with
a memoized exact widget-cover dynamic program.  Ranking is by replayed
manipulation cost: walking the query log through the candidate controls
and charging each control state change.
"""

from __future__ import annotations

import itertools
import json
import math
from bisect import insort
from dataclasses import dataclass
from importlib.resources import files

from .catalogue import Attr
from .cost import DEFAULTS, GESTURE_COST, CostParams, Touchpoint, manipulation_cost
from .ctree import ABSENT, resolve
from .grammar import unparse
from .nodes import ANY, AST, CHOICE_KINDS, MULTI, SUBSET, VAL, Node, contains_choice, render, walk
from .qschema import WILDCARD, Opt, Or, Star, TreeAnalysis, is_categorical, is_quantitative, node_schema, prim_of, schema_compatible


# --------------------------------------------------------------------------
# visualization schemas


@dataclass(frozen=True)
class Slot:
    name: str
    channel: str  # "q" quantitative, "c" categorical, "qc" either
    required: bool


@dataclass(frozen=True)
class VisSchema:
    kind: str
    slots: tuple[Slot, ...]
    fds: tuple[tuple[tuple[str, ...], str], ...]
    events: tuple[str, ...]
    rank: int  # preference on cost ties; higher wins


VIS_SCHEMAS: tuple[VisSchema, ...] = (
    VisSchema("table", (), (), ("click",), 0),
    VisSchema(
        "point",
        (
            Slot("x", "qc", True),
            Slot("y", "q", True),
            Slot("color", "c", False),
            Slot("shape", "c", False),
            Slot("size", "c", False),
        ),
        (),
        ("click", "multi_click", "brush_x", "brush_y", "brush_xy", "pan_zoom"),
        1,
    ),
    VisSchema(
        "bar",
        (Slot("x", "c", True), Slot("y", "q", True), Slot("color", "c", False)),
        ((("x", "color"), "y"),),
        ("click", "multi_click", "brush_x"),
        2,
    ),
    VisSchema(
        "line",
        (
            Slot("x", "qc", True),
            Slot("y", "q", True),
            Slot("color", "c", False),
            Slot("shape", "c", False),
            Slot("size", "c", False),
        ),
        ((("x", "color", "shape", "size"), "y"),),
        ("click", "pan_zoom"),
        3,
    ),
)

VIS_BY_KIND = {s.kind: s for s in VIS_SCHEMAS}

#: gestures that compete for a chart's drag surface: one kind per host
VIEWPORT_FAMILY = frozenset({"brush_x", "brush_y", "brush_xy", "pan_zoom"})


@dataclass(frozen=True)
class VisMapping:
    """One tree drawn as one chart, result columns assigned to slots."""

    tree: int
    kind: str
    slots: tuple[tuple[str, int], ...] = ()
    rank: int = 0

    def column(self, slot: str) -> int | None:
        for name, col in self.slots:
            if name == slot:
                return col
        return None


def _channel_ok(col_type, channel: str) -> bool:
    if channel == "q":
        return is_quantitative(col_type)
    if channel == "c":
        return is_categorical(col_type)
    return is_quantitative(col_type) or is_categorical(col_type)


def _fds_ok(schema: VisSchema, assign: dict[str, int], analysis: TreeAnalysis) -> bool:
    for determinants, dependent in schema.fds:
        if dependent not in assign:
            continue
        dets = {assign[name] for name in determinants if name in assign}
        if not analysis.fd_holds(dets, assign[dependent]):
            return False
    return True


def candidate_vis_mappings(
    tree_index: int, analysis: TreeAnalysis, exempt: frozenset = frozenset()
) -> list[VisMapping]:
    """Every chart this tree can draw as; a data table always qualifies.

    Every result column must land on a slot — charts may not silently
    drop data — except ``exempt`` columns (declared-key attributes, which
    identify records rather than carry data): those may be omitted.
    """

    out = [VisMapping(tree_index, "table", (), 0)]
    result = analysis.result
    if result is None:
        return out
    mandatory = [i for i in range(len(result)) if i not in exempt]
    droppable = [i for i in range(len(result)) if i in exempt]
    for r in range(len(droppable) + 1):
        for kept in itertools.combinations(droppable, r):
            data = sorted(mandatory + list(kept))
            for schema in VIS_SCHEMAS:
                if not schema.slots:
                    continue
                required = [s for s in schema.slots if s.required]
                optional = [s for s in schema.slots if not s.required]
                if not (len(required) <= len(data) <= len(schema.slots)):
                    continue
                for extra in itertools.combinations(optional, len(data) - len(required)):
                    slots = required + list(extra)
                    for perm in itertools.permutations(data):
                        if not all(
                            _channel_ok(result[ci].type, s.channel)
                            for s, ci in zip(slots, perm)
                        ):
                            continue
                        assign = {s.name: ci for s, ci in zip(slots, perm)}
                        if not _fds_ok(schema, assign, analysis):
                            continue
                        pairs = tuple((s.name, ci) for s, ci in zip(slots, perm))
                        out.append(VisMapping(tree_index, schema.kind, pairs, schema.rank))
    return out


# --------------------------------------------------------------------------
# widget template registry


@dataclass(frozen=True)
class WidgetTemplate:
    id: str
    schema: tuple
    anchors: frozenset[str]
    enumerating: bool
    value_type: str | None
    constraints: tuple[str, ...]


def _parse_slot_schema(text: str) -> tuple:
    """Parse a template slot pattern like ``<v:_>`` or ``<s:num, e:num>``."""
    inner = text.strip()
    if not (inner.startswith("<") and inner.endswith(">")):
        raise ValueError(f"bad template schema {text!r}")
    out: list = []
    for part in inner[1:-1].split(","):
        typ = part.split(":", 1)[1].strip()
        if typ == "_":
            out.append(WILDCARD)
        elif typ == "_?":
            out.append(Opt(WILDCARD))
        elif typ == "_*":
            out.append(Star(WILDCARD))
        else:
            out.append(typ)
    return tuple(out)


def load_widget_templates() -> tuple[WidgetTemplate, ...]:
    raw = json.loads(files("queryboard").joinpath("assets/widgets.json").read_text())
    out = []
    for t in raw["templates"]:
        out.append(
            WidgetTemplate(
                id=t["id"],
                schema=_parse_slot_schema(t["schema"]),
                anchors=frozenset(t["anchors"]),
                enumerating=bool(t.get("enumerating", False)),
                value_type=t.get("value_type"),
                constraints=tuple(t.get("constraints", ())),
            )
        )
    return tuple(out)


WIDGET_TEMPLATES = load_widget_templates()

_ANCHOR_CLASS = {VAL: "val", ANY: "any", MULTI: "multi", SUBSET: "subset"}


# --------------------------------------------------------------------------
# candidates


@dataclass(frozen=True)
class Region:
    """A two-ended range over one attribute: low/high literal choice nodes,
    optionally guarded by an on/off gate."""

    tree: int
    attr: Attr
    gate: int | None
    lo: int
    hi: int
    anchor: int


@dataclass(frozen=True)
class Candidate:
    """One control that could cover a set of choice nodes.

    Widgets stand alone (``pk is None``); gestures carry the physical key
    ``(host tree, template)`` — same-key selections share one physical
    gesture, so their manipulations are billed on the union of their
    covered nodes.
    """

    kind: str
    widget: bool
    covered: tuple[int, ...]
    anchor: int
    trees: tuple[int, ...]
    roles: tuple[tuple[int, str], ...]
    host: int | None = None
    options: tuple = ()
    labels: tuple[str, ...] = ()
    acts: int = 0
    weight: float = 0.0
    pk: tuple | None = None


def _atomic(node: Node) -> bool:
    """True when the subtree reads as one enumerable option — a value,
    column, or single predicate — rather than a clause or whole query."""
    for n in walk(node):
        if n.is_list or n.label == "select":
            return False
    return True


class MappingContext:
    """Shared per-state indexes: document order, observed bindings,
    synchronized-node groups, range regions, and host chart results."""

    def __init__(self, state, cat, params: CostParams = DEFAULTS):
        self.state = state
        self.cat = cat
        self.params = params
        self.clist: list[Node] = []
        self.tree_of: dict[int, int] = {}
        self.inside_multi: set[int] = set()
        for ti, tree in enumerate(state.trees):
            for node in tree.choices:
                self.clist.append(node)
                self.tree_of[node.node_id] = ti
                chain = tree.parent_chain(node.node_id)[1:]
                if any(tree.nodes[a].kind == MULTI for a in chain):
                    self.inside_multi.add(node.node_id)
        self.pos = {n.node_id: i for i, n in enumerate(self.clist)}
        self._acts_cache: dict[frozenset, int] = {}
        self._proj_cache: dict[tuple, list] = {}
        self._host_rows: dict[int, list] = {}
        self.slave_groups = self._build_slave_groups()
        self.regions = self._discover_regions()
        self.region_groups = self._group_regions()
        self._widget_cands: list[Candidate] | None = None

    # -- observed bindings ------------------------------------------------

    def node(self, nid: int) -> Node:
        return self.state.trees[self.tree_of[nid]].nodes[nid]

    def _norm_entry(self, nid: int, entry):
        """Collapse a binding entry to the value a control would hold;
        ``None`` means the control is inert (off / empty)."""
        node = self.node(nid)
        kind, value = entry[0], entry[1]
        if kind == "any":
            if node.nil_index is not None and value == node.nil_index:
                return None
            return value
        if kind == "val":
            return value
        if kind == "multi":
            if not value:
                return None
            frozen = [tuple(sorted(sub.items())) for sub in value]
            return tuple(sorted(frozen, key=repr))
        if kind == "subset":
            return tuple(value) or None
        raise ValueError(entry)

    def observed(self, nid: int) -> list:
        """Normalized per-query views of one node, for its tree's queries."""
        ti = self.tree_of[nid]
        out = []
        for entry in self.state.bindings.observed(ti, nid):
            if entry is ABSENT:
                out.append(ABSENT)
            else:
                out.append(self._norm_entry(nid, entry))
        return out

    def observed_values(self, nid: int) -> list:
        return [v for v in self.observed(nid) if v is not ABSENT and v is not None]

    def projections_for(self, covered: tuple[int, ...]) -> list:
        """Per query of the whole log, the joint view through ``covered``.

        A query leaves foreign-tree and absent components at their previous
        value (operating an untouched control is not re-billed); a row of
        all-inert components is ``None`` — the control is untouched.
        """

        key = tuple(sorted(covered, key=self.pos.__getitem__))
        cached = self._proj_cache.get(key)
        if cached is not None:
            return cached
        prev: dict[int, object] = {nid: None for nid in key}
        rows = []
        for ti_q, binding in self.state.bindings.witnesses:
            comps = []
            for nid in key:
                if self.tree_of[nid] == ti_q:
                    entry = binding.get(nid, ABSENT)
                    if entry is not ABSENT:
                        prev[nid] = self._norm_entry(nid, entry)
                comps.append(prev[nid])
            rows.append(None if all(c is None for c in comps) else tuple(comps))
        self._proj_cache[key] = rows
        return rows

    def acts(self, covered: frozenset) -> int:
        """How many times a control over ``covered`` changes state when the
        query log is replayed through it."""
        cached = self._acts_cache.get(covered)
        if cached is not None:
            return cached
        rows = self.projections_for(tuple(covered))
        n = 0
        prev = None
        for qi, row in enumerate(rows):
            if qi == 0:
                if row is not None:
                    n += 1
            elif row != prev:
                n += 1
            prev = row
        self._acts_cache[covered] = n
        return n

    # -- synchronized nodes ----------------------------------------------

    def _signature(self, ti: int, node: Node):
        types = self.state.analyses[ti].types
        attrs = []
        for n in walk(node):
            t = types.get(n.node_id)
            if isinstance(t, Attr):
                attrs.append((t.table, t.column))
        head = types.get(node.node_id, node.littype)
        if isinstance(head, Attr):
            head = (head.table, head.column)
        obs = tuple(
            "absent" if v is ABSENT else ("=", v) for v in self.observed(node.node_id)
        )
        return (node.kind, node.nil_index is not None, len(node.children), head, tuple(sorted(attrs)), obs)

    def _build_slave_groups(self) -> dict[int, tuple[int, ...]]:
        """Nodes within one tree that always vary together (same kind,
        attribute profile, and observed history) share one control."""
        groups: dict[int, tuple[int, ...]] = {}
        for ti, tree in enumerate(self.state.trees):
            by_sig: dict[tuple, list[int]] = {}
            for node in tree.choices:
                if node.node_id in self.inside_multi:
                    continue
                if node.kind not in (VAL, ANY):
                    continue
                by_sig.setdefault(self._signature(ti, node), []).append(node.node_id)
            for members in by_sig.values():
                if len(members) < 2:
                    continue
                related = any(
                    a != b and a in tree.parent_chain(b)
                    for a in members
                    for b in members
                )
                if related:
                    continue
                for m in members:
                    groups[m] = tuple(members)
        return groups

    # -- range regions ----------------------------------------------------

    def _endpoint_side(self, tree, val_id: int) -> str | None:
        for anc_id in tree.parent_chain(val_id)[1:]:
            anc = tree.nodes[anc_id]
            if anc.label == "pair":
                in_low = any(n.node_id == val_id for n in walk(anc.children[0]))
                return "lo" if in_low else "hi"
            if anc.label == "cmp":
                if anc.payload in (">", ">="):
                    return "lo"
                if anc.payload in ("<", "<="):
                    return "hi"
                return None
        return None

    def _range_from(self, ti: int, tree, root: Node, gate: int | None, anchor: int) -> Region | None:
        types = self.state.analyses[ti].types
        vals = [n for n in walk(root) if n.kind in CHOICE_KINDS]
        if len(vals) != 2 or any(v.kind != VAL for v in vals):
            return None
        if any(v.node_id in self.inside_multi for v in vals):
            return None
        t0, t1 = types.get(vals[0].node_id), types.get(vals[1].node_id)
        if not (isinstance(t0, Attr) and t0 == t1):
            return None
        sides = {self._endpoint_side(tree, v.node_id): v.node_id for v in vals}
        if set(sides) != {"lo", "hi"}:
            return None
        return Region(ti, t0, gate, sides["lo"], sides["hi"], anchor)

    def _sibling_regions(self, ti: int, tree, conj: Node) -> list[Region]:
        types = self.state.analyses[ti].types
        ends: dict[tuple, dict[str, tuple[int, int]]] = {}
        for child in conj.children:
            vals = [n for n in walk(child) if n.kind in CHOICE_KINDS]
            if len(vals) != 1 or vals[0].kind != VAL:
                continue
            vid = vals[0].node_id
            if vid in self.inside_multi:
                continue
            t = types.get(vid)
            if not isinstance(t, Attr):
                continue
            side = self._endpoint_side(tree, vid)
            if side is None:
                continue
            ends.setdefault((t.table, t.column), {}).setdefault(side, []).append((vid, child.node_id))
        out = []
        for (table, column), sides in sorted(ends.items()):
            if len(sides.get("lo", ())) == 1 and len(sides.get("hi", ())) == 1:
                lo, anchor = sides["lo"][0]
                hi, _ = sides["hi"][0]
                attr = types[lo]
                out.append(Region(ti, attr, None, lo, hi, anchor))
        return out

    def _discover_regions(self) -> list[Region]:
        regions: list[Region] = []
        seen = set()

        def add(reg: Region | None):
            if reg is None:
                return
            key = (reg.tree, reg.gate, reg.lo, reg.hi)
            if key not in seen:
                seen.add(key)
                regions.append(reg)

        for ti, tree in enumerate(self.state.trees):
            for node in tree.nodes.values():
                if node.kind == AST and node.label == "pair":
                    add(self._range_from(ti, tree, node, None, node.node_id))
                elif node.kind == ANY and node.is_optional:
                    add(self._range_from(ti, tree, node.optional_body, node.node_id, node.node_id))
                elif node.kind == AST and node.label in ("conj", "hconj"):
                    for reg in self._sibling_regions(ti, tree, node):
                        add(reg)
        return regions

    def _region_signature(self, reg: Region):
        gate_obs = None if reg.gate is None else tuple(
            "absent" if v is ABSENT else ("=", v) for v in self.observed(reg.gate)
        )
        obs = tuple(
            tuple("absent" if v is ABSENT else ("=", v) for v in self.observed(nid))
            for nid in (reg.lo, reg.hi)
        )
        return (reg.tree, reg.attr.table, reg.attr.column, reg.gate is None, gate_obs, obs)

    def _group_regions(self) -> list[list[Region]]:
        by_sig: dict[tuple, list[Region]] = {}
        for reg in self.regions:
            by_sig.setdefault(self._region_signature(reg), []).append(reg)
        return list(by_sig.values())

    def region_ordered(self, reg: Region) -> bool:
        """Every observed (low, high) pair is actually ordered low <= high."""
        for row in self.projections_for((reg.lo, reg.hi)):
            if row is None:
                continue
            lo, hi = row
            if lo is None or hi is None:
                continue
            try:
                if lo > hi:
                    return False
            except TypeError:
                return False
        return True

    # -- host chart results ----------------------------------------------

    def host_rows(self, hi: int) -> list[list[tuple]]:
        """Executed result rows for each query the host tree expresses."""
        cached = self._host_rows.get(hi)
        if cached is not None:
            return cached
        tree = self.state.trees[hi]
        rows = []
        for qi in self.state.bindings.by_tree.get(hi, []):
            _, binding = self.state.bindings.witnesses[qi]
            sql = unparse(resolve(tree.root, binding))
            rows.append(self.cat.execute(sql))
        self._host_rows[hi] = rows
        return rows

    def host_column(self, hi: int, attr: Attr) -> int | None:
        result = self.state.analyses[hi].result
        if result is None:
            return None
        for j, col in enumerate(result):
            if isinstance(col.attr, Attr) and col.attr == attr:
                return j
        return None

    def exempt_columns(self, ti: int) -> frozenset:
        """Result columns a chart may omit: members of a declared table key."""
        out = set()
        result = self.state.analyses[ti].result
        for i, col in enumerate(result or ()):
            a = col.attr
            if isinstance(a, Attr) and a.table:
                table = self.cat.table(a.table)
                if table is not None and table.key and a.column in table.key:
                    out.add(i)
        return frozenset(out)

    # -- candidate caches -------------------------------------------------

    @property
    def widget_cands(self) -> list[Candidate]:
        if self._widget_cands is None:
            self._widget_cands = widget_candidates(self)
        return self._widget_cands


def mapping_context(state, cat, params: CostParams = DEFAULTS) -> MappingContext:
    return MappingContext(state, cat, params)


# --------------------------------------------------------------------------
# widget candidate generation


def _widget(ctx: MappingContext, tmpl: WidgetTemplate, covered, anchor, ti, roles, options=(), labels=()) -> Candidate:
    ordered = tuple(sorted(covered, key=ctx.pos.__getitem__))
    acts = ctx.acts(frozenset(ordered))
    weight = acts * manipulation_cost(tmpl.id, len(options), ctx.params)
    return Candidate(
        kind=tmpl.id,
        widget=True,
        covered=ordered,
        anchor=anchor,
        trees=tuple(sorted({ctx.tree_of[n] for n in ordered})),
        roles=tuple(roles),
        options=tuple(options),
        labels=tuple(labels),
        acts=acts,
        weight=weight,
    )


def _val_widget_cands(ctx, ti, node, members, tmpl) -> list[Candidate]:
    types = ctx.state.analyses[ti].types
    vtype = types.get(node.node_id, node.littype)
    roles = [(m, "value") for m in members]
    if tmpl.enumerating:
        options = []
        for v in ctx.observed_values(node.node_id):
            if v not in options:
                options.append(v)
        if not options:
            return []
        labels = [str(v) for v in options]
        return [_widget(ctx, tmpl, members, members[0], ti, roles, options, labels)]
    if tmpl.value_type == "num" and prim_of(vtype) != "num":
        return []
    return [_widget(ctx, tmpl, members, members[0], ti, roles)]


def _any_widget_cands(ctx, ti, node, members, tmpl) -> list[Candidate]:
    if tmpl.id == "toggle":
        if not node.is_optional:
            return []
        roles = [(m, "gate") for m in members]
        return [_widget(ctx, tmpl, members, members[0], ti, roles)]
    # enumerating switch: children must be fixed, atomic alternatives
    if any(contains_choice(c) for c in node.children):
        return []
    if not all(c.is_nil or _atomic(c) for c in node.children):
        return []
    options = list(range(len(node.children)))
    labels = ["none" if c.is_nil else render(c) for c in node.children]
    roles = [(m, "choice") for m in members]
    return [_widget(ctx, tmpl, members, members[0], ti, roles, options, labels)]


def multi_elements(ctx: MappingContext, ti: int, node: Node):
    """For a repetition whose template is a single literal slot: the
    template slot id and per-query element-value lists (None = complex)."""
    template = node.children[0]
    tvars = [n for n in walk(template) if n.kind in CHOICE_KINDS]
    if len(tvars) != 1 or tvars[0].kind != VAL:
        return None
    slot = tvars[0].node_id
    per_query = []
    for entry in ctx.state.bindings.observed(ti, node.node_id):
        if entry is ABSENT:
            per_query.append(ABSENT)
            continue
        values = []
        for sub in entry[1]:
            got = sub.get(slot)
            if got is None or got[0] != "val":
                return None
            values.append(got[1])
        if len(set(map(repr, values))) != len(values):
            return None  # duplicate elements: not expressible as a set control
        per_query.append(values)
    return slot, per_query


def _multi_widget_cands(ctx, ti, node, tmpl) -> list[Candidate]:
    got = multi_elements(ctx, ti, node)
    if got is None:
        return []
    slot, per_query = got
    options: list = []
    for values in per_query:
        if values is ABSENT:
            continue
        for v in values:
            if v not in options:
                options.append(v)
    if not options:
        return []
    covered = [node.node_id, slot]
    roles = [(node.node_id, "elements"), (slot, "element_value")]
    labels = [str(v) for v in options]
    return [_widget(ctx, tmpl, covered, node.node_id, ti, roles, options, labels)]


def _subset_widget_cands(ctx, ti, node, tmpl) -> list[Candidate]:
    if any(contains_choice(c) for c in node.children):
        return []
    if not all(_atomic(c) for c in node.children):
        return []
    options = list(range(len(node.children)))
    labels = [render(c) for c in node.children]
    roles = [(node.node_id, "subset")]
    return [_widget(ctx, tmpl, [node.node_id], node.node_id, ti, roles, options, labels)]


def _range_widget_cands(ctx: MappingContext) -> list[Candidate]:
    tmpl = next(t for t in WIDGET_TEMPLATES if "pair" in t.anchors)
    out = []
    for group in ctx.region_groups:
        regs = [r for r in group if r.gate is None]
        if not regs or prim_of(regs[0].attr) != "num":
            continue
        if not all(ctx.region_ordered(r) for r in regs):
            continue
        variants = [[r] for r in regs]
        if len(regs) > 1:
            variants.append(regs)
        for chosen in variants:
            covered = [n for r in chosen for n in (r.lo, r.hi)]
            roles = [(n, role) for r in chosen for n, role in ((r.lo, "lo"), (r.hi, "hi"))]
            out.append(_widget(ctx, tmpl, covered, chosen[0].anchor, chosen[0].tree, roles))
    return out


def widget_candidates(ctx: MappingContext) -> list[Candidate]:
    """Every widget instantiation over the state's choice nodes."""
    out: list[Candidate] = []
    for ti, tree in enumerate(ctx.state.trees):
        types = ctx.state.analyses[ti].types
        for node in tree.choices:
            nid = node.node_id
            if nid in ctx.inside_multi:
                continue
            group = ctx.slave_groups.get(nid)
            if group is not None and group[0] != nid:
                continue  # merged candidate is emitted at the group head
            member_sets = [(nid,)]
            if group is not None:
                member_sets.append(group)
            schema = node_schema(node, types)
            anchor_class = _ANCHOR_CLASS[node.kind]
            for tmpl in WIDGET_TEMPLATES:
                if anchor_class not in tmpl.anchors:
                    continue
                if tmpl.id == "checkbox" and node.kind == SUBSET:
                    if not all(isinstance(e, Opt) for e in schema):
                        continue
                elif not schema_compatible(schema, tmpl.schema):
                    continue
                if node.kind == VAL:
                    for members in member_sets:
                        out.extend(_val_widget_cands(ctx, ti, node, members, tmpl))
                elif node.kind == ANY:
                    for members in member_sets:
                        out.extend(_any_widget_cands(ctx, ti, node, members, tmpl))
                elif node.kind == MULTI:
                    out.extend(_multi_widget_cands(ctx, ti, node, tmpl))
                elif node.kind == SUBSET:
                    out.extend(_subset_widget_cands(ctx, ti, node, tmpl))
    out.extend(_range_widget_cands(ctx))
    return out


# --------------------------------------------------------------------------
# gesture candidate generation


def _gesture(ctx, kind, hi, covered, roles) -> Candidate:
    ordered = tuple(sorted(covered, key=ctx.pos.__getitem__))
    acts = ctx.acts(frozenset(ordered))
    return Candidate(
        kind=kind,
        widget=False,
        covered=ordered,
        anchor=ordered[0],
        trees=tuple(sorted({ctx.tree_of[n] for n in ordered})),
        roles=tuple(roles),
        host=hi,
        acts=acts,
        weight=acts * GESTURE_COST,
        pk=(hi, kind),
    )


def _click_value_safe(ctx, hi, col, values) -> bool:
    for rows in ctx.host_rows(hi):
        have = {row[col] for row in rows if row[col] is not None}
        if all(v in have for v in values):
            return True
    return False


def _brush_extent_safe(ctx, hi, col, values) -> bool:
    for rows in ctx.host_rows(hi):
        have = [row[col] for row in rows if row[col] is not None]
        if not have:
            continue
        try:
            if min(have) <= min(values) and max(values) <= max(have):
                return True
        except TypeError:
            continue
    return False


def _domain_safe(attr: Attr, values) -> bool:
    if attr.lo is None or attr.hi is None:
        return False
    try:
        return all(attr.lo <= v <= attr.hi for v in values)
    except TypeError:
        return False


def _click_candidates(ctx, hi) -> list[Candidate]:
    out = []
    emitted = set()
    for ti, tree in enumerate(ctx.state.trees):
        if ti == hi:
            continue
        types = ctx.state.analyses[ti].types
        for node in tree.choices:
            nid = node.node_id
            if node.kind != VAL or nid in ctx.inside_multi:
                continue
            attr = types.get(nid)
            if not isinstance(attr, Attr) or not attr.table:
                continue
            col = ctx.host_column(hi, attr)
            if col is None:
                continue
            values = ctx.observed_values(nid)
            if not values or not _click_value_safe(ctx, hi, col, values):
                continue
            group = ctx.slave_groups.get(nid)
            member_sets = [(nid,)]
            if group is not None:
                if group[0] != nid:
                    member_sets = [(nid,)] if nid not in emitted else []
                else:
                    member_sets.append(group)
                    emitted.update(group)
            for members in member_sets:
                roles = [(m, "value") for m in members]
                out.append(_gesture(ctx, "click", hi, members, roles))
    return out


def _multi_click_candidates(ctx, hi) -> list[Candidate]:
    out = []
    for ti, tree in enumerate(ctx.state.trees):
        if ti == hi:
            continue
        types = ctx.state.analyses[ti].types
        for node in tree.choices:
            if node.kind != MULTI or node.node_id in ctx.inside_multi:
                continue
            got = multi_elements(ctx, ti, node)
            if got is None:
                continue
            slot, per_query = got
            attr = types.get(slot)
            if not isinstance(attr, Attr) or not attr.table:
                continue
            col = ctx.host_column(hi, attr)
            if col is None:
                continue
            values = [v for vs in per_query if vs is not ABSENT for v in vs]
            if not values or not _click_value_safe(ctx, hi, col, values):
                continue
            roles = [(node.node_id, "elements"), (slot, "element_value")]
            out.append(_gesture(ctx, "multi_click", hi, [node.node_id, slot], roles))
    return out


def _region_cand(ctx, kind, hi, regs) -> Candidate:
    covered = []
    roles = []
    for r in regs:
        if r.gate is not None:
            covered.append(r.gate)
            roles.append((r.gate, "gate"))
        covered += [r.lo, r.hi]
        roles += [(r.lo, "lo"), (r.hi, "hi")]
    return _gesture(ctx, kind, hi, covered, roles)


def _brush_candidates(ctx, hi, axis_attr, kind) -> list[Candidate]:
    if axis_attr is None:
        return []
    col = ctx.host_column(hi, axis_attr)
    if col is None:
        return []
    out = []
    for group in ctx.region_groups:
        regs = [r for r in group if r.tree != hi and r.attr == axis_attr]
        if not regs:
            continue
        if not all(ctx.region_ordered(r) for r in regs):
            continue
        values = [v for r in regs for n in (r.lo, r.hi) for v in ctx.observed_values(n)]
        if not values or not _brush_extent_safe(ctx, hi, col, values):
            continue
        variants = [[r] for r in regs]
        if len(regs) > 1:
            variants.append(regs)
        for chosen in variants:
            out.append(_region_cand(ctx, kind, hi, chosen))
    return out


def _pan_zoom_candidates(ctx, hi, axes: dict) -> list[Candidate]:
    numeric = {
        slot: attr
        for slot, attr in axes.items()
        if attr is not None and prim_of(attr) == "num"
    }
    if not numeric:
        return []
    out = []
    for ti in range(len(ctx.state.trees)):
        regs = []
        roles_by_reg = {}
        for reg in ctx.regions:
            if reg.tree != ti or reg.gate is not None:
                continue
            for slot, attr in numeric.items():
                if reg.attr == attr:
                    regs.append(reg)
                    roles_by_reg[(reg.lo, reg.hi)] = slot
                    break
        if not regs:
            continue
        ok = True
        for reg in regs:
            values = ctx.observed_values(reg.lo) + ctx.observed_values(reg.hi)
            if not ctx.region_ordered(reg) or not _domain_safe(reg.attr, values):
                ok = False
                break
        if not ok:
            continue
        covered = []
        roles = []
        for reg in regs:
            slot = roles_by_reg[(reg.lo, reg.hi)]
            covered += [reg.lo, reg.hi]
            roles += [(reg.lo, f"{slot}_lo"), (reg.hi, f"{slot}_hi")]
        out.append(_gesture(ctx, "pan_zoom", hi, covered, roles))
    return out


def gesture_candidates(ctx: MappingContext, vms: tuple[VisMapping, ...]) -> list[Candidate]:
    """Every chart-hosted gesture available under this vis assignment.

    Filtering gestures (clicks, brushes) route to nodes of *other* trees;
    pan/zoom may also drive its own chart's query window.  Unsafe gestures
    — ones whose observed values the host chart could not have displayed —
    are not generated at all, so covers fall back to widgets.
    """

    out: list[Candidate] = []
    for hi, vm in enumerate(vms):
        schema = VIS_BY_KIND[vm.kind]
        analysis = ctx.state.analyses[hi]
        if analysis.result is None or not ctx.state.bindings.by_tree.get(hi):
            continue
        axes: dict[str, Attr | None] = {}
        for slot in ("x", "y"):
            col = vm.column(slot)
            attr = analysis.result[col].attr if col is not None else None
            axes[slot] = attr if isinstance(attr, Attr) and attr.table else None
        for event in schema.events:
            if event == "click":
                out.extend(_click_candidates(ctx, hi))
            elif event == "multi_click":
                out.extend(_multi_click_candidates(ctx, hi))
            elif event == "brush_x":
                out.extend(_brush_candidates(ctx, hi, axes["x"], "brush_x"))
            elif event == "brush_y":
                out.extend(_brush_candidates(ctx, hi, axes["y"], "brush_y"))
            elif event == "pan_zoom":
                out.extend(_pan_zoom_candidates(ctx, hi, axes))
            # brush_xy: no two-axis region shape arises from this grammar
    return out


# --------------------------------------------------------------------------
# exact widget covers (the search's completion and admissible bound)


class _WidgetCover:
    """Memoized top-k exact covers of a node set by widget candidates.

    Candidates are anchored at their first covered node in document
    order, so each subset has a canonical decomposition and the DP is
    exact.  ``floor`` (the best completion of a set) is an admissible
    bound for the gesture search: leaving more nodes to widgets can only
    cost at least this much.
    """

    def __init__(self, ctx: MappingContext, cands: list[Candidate], k: int):
        self.ctx = ctx
        self.k = k
        self.by_first: dict[int, list[Candidate]] = {}
        for c in cands:
            first = min(c.covered, key=ctx.pos.__getitem__)
            self.by_first.setdefault(first, []).append(c)
        self.memo: dict[frozenset, list] = {}

    def best(self, nodes: frozenset) -> list[tuple[float, tuple[Candidate, ...]]]:
        if not nodes:
            return [(0.0, ())]
        cached = self.memo.get(nodes)
        if cached is not None:
            return cached
        first = min(nodes, key=self.ctx.pos.__getitem__)
        out = []
        for c in self.by_first.get(first, ()):
            cov = frozenset(c.covered)
            if not cov <= nodes:
                continue
            for sub_cost, sub in self.best(nodes - cov):
                out.append((c.weight + sub_cost, (c,) + sub))
        out.sort(key=lambda e: (e[0], len(e[1]), sorted(x.covered for x in e[1])))
        out = out[: self.k]
        self.memo[nodes] = out
        return out

    def floor(self, nodes) -> float:
        got = self.best(frozenset(nodes))
        return got[0][0] if got else math.inf


# --------------------------------------------------------------------------
# the (visualization, cover) search


@dataclass(frozen=True)
class MappingResult:
    """One ranked interface mapping: total replayed manipulation cost of
    the cover (chart base cost and navigation are layered on later, and
    are constant or layout-dependent respectively within a state)."""

    cost: float
    vis: tuple[VisMapping, ...]
    picks: tuple[Candidate, ...]


def cover_cost(ctx: MappingContext, picks) -> float:
    """Replayed manipulation cost of a cover; same-physical gestures are
    billed once on the union of what they drive."""
    total = 0.0
    unions: dict[tuple, frozenset] = {}
    for c in picks:
        if c.pk is None:
            total += c.weight
        else:
            unions[c.pk] = unions.get(c.pk, frozenset()) | frozenset(c.covered)
    for cov in unions.values():
        total += ctx.acts(cov) * GESTURE_COST
    return total


def _vis_tie(vms) -> tuple:
    return tuple(-vm.rank for vm in vms)


def search_vm(state, cat, k: int = 10, params: CostParams = DEFAULTS, ctx: MappingContext | None = None) -> list[MappingResult]:
    """Top-k (visualization assignment, exact cover) pairs by cost.

    Ties prefer fewer controls, then document order of covered node sets,
    then higher-ranked chart kinds.
    """

    if ctx is None:
        ctx = MappingContext(state, cat, params)
    cover = _WidgetCover(ctx, ctx.widget_cands, k)
    n = len(ctx.clist)
    best: list[tuple] = []
    counter = itertools.count()
    # preferred chart kinds first: equal-cost pruning then keeps the
    # assignment the tie ordering would have chosen
    vis_options = [
        sorted(
            candidate_vis_mappings(ti, analysis, ctx.exempt_columns(ti)),
            key=lambda vm: -vm.rank,
        )
        for ti, analysis in enumerate(ctx.state.analyses)
    ]

    for vms in itertools.product(*vis_options):
        gcands = gesture_candidates(ctx, vms)
        by_pos: dict[int, list[Candidate]] = {}
        for c in gcands:
            by_pos.setdefault(min(ctx.pos[x] for x in c.covered), []).append(c)

        picks: list[Candidate] = []
        taken: set[int] = set()
        widget_nodes: set[int] = set()
        groups: dict[tuple, tuple[frozenset, int]] = {}
        families: dict[int, tuple[str, int]] = {}

        def kth() -> float:
            return best[k - 1][0] if len(best) >= k else math.inf

        def finish(gcost: float):
            for wcost, combo in cover.best(frozenset(widget_nodes)):
                total = gcost + wcost
                if total > kth():
                    break
                allp = tuple(picks) + combo
                tie = (
                    len(allp),
                    sorted(c.covered for c in allp),
                    _vis_tie(vms),
                )
                insort(best, (total, tie, next(counter), vms, allp))
                del best[k:]

        def dfs(i: int, gcost: float):
            if len(best) >= k and gcost + cover.floor(widget_nodes) >= kth():
                return
            if i == n:
                finish(gcost)
                return
            nid = ctx.clist[i].node_id
            if nid in taken:
                dfs(i + 1, gcost)
                return
            for c in by_pos.get(i, ()):
                if any(x in taken or x in widget_nodes for x in c.covered):
                    continue
                if c.kind in VIEWPORT_FAMILY:
                    locked = families.get(c.host)
                    if locked is not None and locked[0] != c.kind:
                        continue
                old = groups.get(c.pk)
                new_cov = (old[0] if old else frozenset()) | frozenset(c.covered)
                new_acts = ctx.acts(new_cov)
                delta = (new_acts - (old[1] if old else 0)) * GESTURE_COST
                groups[c.pk] = (new_cov, new_acts)
                if c.kind in VIEWPORT_FAMILY:
                    name, count = families.get(c.host, (c.kind, 0))
                    families[c.host] = (name, count + 1)
                taken.update(c.covered)
                picks.append(c)
                dfs(i + 1, gcost + delta)
                picks.pop()
                taken.difference_update(c.covered)
                if old is None:
                    del groups[c.pk]
                else:
                    groups[c.pk] = old
                if c.kind in VIEWPORT_FAMILY:
                    name, count = families[c.host]
                    if count == 1:
                        del families[c.host]
                    else:
                        families[c.host] = (name, count - 1)
            widget_nodes.add(nid)
            dfs(i + 1, gcost)
            widget_nodes.remove(nid)

        dfs(0, 0.0)

    return [MappingResult(cost, vms, allp) for cost, _, _, vms, allp in best]


def random_mapping(ctx: MappingContext, rng) -> MappingResult | None:
    """One uniformly sampled valid mapping, or None when the state has an
    uncoverable choice node under the sampled visualization assignment."""

    vis_options = [
        candidate_vis_mappings(ti, analysis, ctx.exempt_columns(ti))
        for ti, analysis in enumerate(ctx.state.analyses)
    ]
    vms = tuple(opts[rng.randrange(len(opts))] for opts in vis_options)
    cands = ctx.widget_cands + gesture_candidates(ctx, vms)
    by_pos: dict[int, list[Candidate]] = {}
    for c in cands:
        by_pos.setdefault(min(ctx.pos[x] for x in c.covered), []).append(c)

    picks: list[Candidate] = []
    taken: set[int] = set()
    families: dict[int, str] = {}
    for i, node in enumerate(ctx.clist):
        if node.node_id in taken:
            continue
        legal = []
        for c in by_pos.get(i, ()):
            if any(x in taken for x in c.covered):
                continue
            if c.kind in VIEWPORT_FAMILY and families.get(c.host, c.kind) != c.kind:
                continue
            legal.append(c)
        if not legal:
            return None
        c = legal[rng.randrange(len(legal))]
        picks.append(c)
        taken.update(c.covered)
        if c.kind in VIEWPORT_FAMILY:
            families[c.host] = c.kind
    return MappingResult(cover_cost(ctx, picks), vms, tuple(picks))


# --------------------------------------------------------------------------
# touchpoints for cost reporting


def touchpoints_for(ctx: MappingContext, picks) -> tuple[list[Touchpoint], list[dict]]:
    """Physical controls and per-query projections for a chosen cover,
    ready for the replay cost model.  Same-physical gesture picks merge
    into one touchpoint over the union of their covered nodes."""

    physical: list[tuple[str, str, int, tuple[int, ...]]] = []
    merged: dict[tuple, list[Candidate]] = {}
    for c in picks:
        if c.pk is None:
            ident = f"w{c.anchor}"
            physical.append((ident, c.kind, len(c.options), c.covered))
        else:
            merged.setdefault(c.pk, []).append(c)
    for (host, template), cs in merged.items():
        cov = sorted({n for c in cs for n in c.covered}, key=ctx.pos.__getitem__)
        physical.append((f"g{host}.{template}", template, 0, tuple(cov)))

    touchpoints = []
    for ident, kind, options, cov in physical:
        first = cov[0]
        order = (ctx.tree_of[first], ctx.pos[first])
        touchpoints.append(Touchpoint(ident, kind, options, order, cov))

    rows = {t.ident: ctx.projections_for(t.covered) for t in touchpoints}
    projections = [
        {t.ident: rows[t.ident][qi] for t in touchpoints}
        for qi in range(len(ctx.state.bindings.witnesses))
    ]
    return touchpoints, projections
