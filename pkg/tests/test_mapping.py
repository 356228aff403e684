"""Mapping choice trees onto charts, widgets and in-chart gestures.

The exhaustive-cover oracle is the core guarantee here: on small states the
pruned search must return exactly the cheapest legal exact cover.  Around it
sit the schema-matching rules (which chart kinds a result admits, which
controls a choice node admits) and the safety rule that keeps gestures off
values their host chart cannot display.
"""

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from queryboard.catalogue import Catalogue
from queryboard.cost import GESTURE_COST, interface_cost
from queryboard.fixtures import LOGS, load_log, seed_db
from queryboard.grammar import parse_log
from queryboard.mapping import (
    VIEWPORT_FAMILY,
    _WidgetCover,
    candidate_vis_mappings,
    cover_cost,
    gesture_candidates,
    mapping_context,
    random_mapping,
    search_vm,
    touchpoints_for,
    widget_candidates,
)
from queryboard.rules import applicable_rules, apply_rule, initial_state

#: greedy rule order that reaches a stable specialized forest on the bundled logs
DRIVE = (
    "push_any",
    "partition",
    "push_opt_through_list",
    "any_to_val",
    "any_to_multi",
    "collapse_single",
    "flatten_any",
)


def driven(log):
    cat = Catalogue(seed_db(LOGS[log]))
    return cat, drive_state(load_log(log), cat)


def drive_state(queries, cat):
    state, rctx = initial_state(queries, cat)
    while True:
        offers = [r for r in applicable_rules(state, rctx) if r.name in DRIVE]
        if not offers:
            return state
        offers.sort(key=lambda r: DRIVE.index(r.name))
        state = apply_rule(state, offers[0], rctx)


def by_kind(picks):
    out = {}
    for p in picks:
        out.setdefault(p.kind, []).append(p)
    return out


# --- which charts a result schema admits -----------------------------------


def test_grouped_count_admits_a_bar_chart():
    cat, state = driven("fig2")
    ctx = mapping_context(state, cat)
    kinds = {
        (vm.kind, vm.slots)
        for vm in candidate_vis_mappings(0, state.analyses[0], ctx.exempt_columns(0))
    }
    assert ("bar", (("x", 0), ("y", 1))) in kinds
    assert ("table", ()) in kinds


def test_declared_key_columns_may_stay_unrendered():
    cat, state = driven("connect")
    ctx = mapping_context(state, cat)
    kinds = {
        (vm.kind, vm.slots)
        for vm in candidate_vis_mappings(0, state.analyses[0], ctx.exempt_columns(0))
    }
    # hp, disp, id: the id key may be dropped, the other two must both map
    assert ("point", (("x", 0), ("y", 1))) in kinds
    assert all(dict(s).get("x") != 2 for _, s in kinds)


def test_non_key_columns_must_all_map():
    cat, state = driven("fig2")
    ctx = mapping_context(state, cat)
    for vm in candidate_vis_mappings(0, state.analyses[0], ctx.exempt_columns(0)):
        if vm.kind != "table":
            assert {c for _, c in vm.slots} == {0, 1}


def test_wide_results_fall_back_to_table_only():
    cat, state = driven("sdss")
    ctx = mapping_context(state, cat)
    vms = candidate_vis_mappings(0, state.analyses[0], ctx.exempt_columns(0))
    assert [vm.kind for vm in vms] == ["table"]


def test_high_cardinality_numbers_are_not_categorical():
    cat, state = driven("connect")
    ctx = mapping_context(state, cat)
    # hp and disp have 20+ distinct values: no bar (categorical x) is offered
    kinds = {vm.kind for vm in candidate_vis_mappings(0, state.analyses[0], ctx.exempt_columns(0))}
    assert "bar" not in kinds


# --- which controls a choice node admits ------------------------------------


def test_value_widgets_match_the_literal_type():
    cat, state = driven("covid")
    ctx = mapping_context(state, cat)
    cands = widget_candidates(ctx)
    by_anchor = {}
    for c in cands:
        by_anchor.setdefault(c.anchor, set()).add(c.kind)
    # the state literal is a string: enumerable and typable, but not slidable
    state_nodes = [
        a for a, kinds in by_anchor.items() if {"radio", "dropdown", "textbox"} <= kinds
    ]
    assert state_nodes
    assert all("slider" not in by_anchor[a] for a in state_nodes)


def test_optional_gates_take_toggles():
    cat, state = driven("covid")
    ctx = mapping_context(state, cat)
    toggles = [c for c in widget_candidates(ctx) if c.kind == "toggle"]
    assert toggles
    for c in toggles:
        node = ctx.node(c.anchor)
        assert node.is_optional


def test_enumerations_list_options_in_first_appearance_order():
    cat, state = driven("covid")
    ctx = mapping_context(state, cat)
    radios = [c for c in widget_candidates(ctx) if c.kind == "radio" and c.options]
    values = {tuple(c.options) for c in radios}
    assert ("CA", "WA") in values or ("CA", "WA", "NY") in values


def test_range_widget_needs_an_ordered_numeric_pair():
    cat, state = driven("sdss")
    ctx = mapping_context(state, cat)
    ranges = [c for c in widget_candidates(ctx) if c.kind == "range"]
    assert ranges
    for c in ranges:
        assert len(c.covered) % 2 == 0
    cat2, state2 = driven("abstract")
    ctx2 = mapping_context(state2, cat2)
    assert not [c for c in widget_candidates(ctx2) if c.kind == "range"]


# --- gesture safety ---------------------------------------------------------


def test_click_allowed_when_one_result_shows_every_bound_value():
    cat, state = driven("fig5")
    best = search_vm(state, cat)[0]
    clicks = by_kind(best.picks).get("click")
    assert clicks, "distribution chart shows 1..4, so a=(1,2) is clickable"
    assert best.cost == 2 * GESTURE_COST


def test_click_rejected_when_any_bound_value_is_undisplayable():
    sql = (
        "SELECT p, count(*) FROM t WHERE a = 4 GROUP BY p;\n"
        "SELECT p, count(*) FROM t WHERE a = 5 GROUP BY p;\n"
        "SELECT a, count(*) FROM t GROUP BY a;\n"
    )
    cat = Catalogue(seed_db("t"))
    state = drive_state(parse_log(sql), cat)
    ctx = mapping_context(state, cat)
    results = search_vm(state, cat, ctx=ctx)
    best = results[0]
    kinds = by_kind(best.picks)
    assert "click" not in kinds, "5 never appears in the a column, so no click"
    assert len(best.picks) == 1 and best.picks[0].widget
    # and not only in the winner: no result uses a gesture for that node
    for res in results:
        assert "click" not in by_kind(res.picks)


def test_brush_endpoints_must_sit_inside_a_displayed_extent():
    cat, state = driven("filter")
    best = search_vm(state, cat)[0]
    brushes = by_kind(best.picks)["brush_x"]
    assert len(brushes) == 6
    for b in brushes:
        assert all(t != b.host for t in b.trees), "brushes cross-filter other charts"


def test_viewport_navigation_stays_inside_the_data_domain():
    cat, state = driven("sdss")
    best = search_vm(state, cat)[0]
    pans = by_kind(best.picks)["pan_zoom"]
    hosts = {p.host for p in pans}
    assert hosts == {1}, "only the scatter hosts navigation"
    covered_trees = {t for p in pans for t in p.trees}
    assert covered_trees == {0, 1}, "navigation drives both its own and the table's window"


# --- the search against an exhaustive oracle --------------------------------


def exact_covers(ctx, cands, nodes):
    if not nodes:
        yield ()
        return
    anchor = min(nodes, key=ctx.pos.__getitem__)
    for c in cands:
        cov = frozenset(c.covered)
        if anchor in cov and cov <= nodes:
            for rest in exact_covers(ctx, cands, nodes - cov):
                yield (c, *rest)


def viewport_legal(cover):
    kinds = {}
    for c in cover:
        if c.kind in VIEWPORT_FAMILY:
            if kinds.setdefault(c.host, c.kind) != c.kind:
                return False
    return True


def oracle_minimum(state, cat):
    ctx = mapping_context(state, cat)
    nodes = frozenset(ctx.pos)
    widgets = widget_candidates(ctx)
    per_tree = [
        candidate_vis_mappings(ti, state.analyses[ti], ctx.exempt_columns(ti))
        for ti in range(len(state.trees))
    ]
    best = None
    for vms in itertools.product(*per_tree):
        cands = widgets + gesture_candidates(ctx, vms)
        for cover in exact_covers(ctx, cands, nodes):
            if not viewport_legal(cover):
                continue
            cost = cover_cost(ctx, cover)
            if best is None or cost < best:
                best = cost
    return best


@pytest.mark.parametrize("log", ["fig2", "fig5", "explore", "connect", "abstract"])
def test_search_equals_exhaustive_cover_minimum(log):
    cat, state = driven(log)
    assert sum(len(t.choices) for t in state.trees) <= 6
    results = search_vm(state, cat)
    assert results[0].cost == pytest.approx(oracle_minimum(state, cat))


@pytest.mark.parametrize("log", ["fig2", "fig5", "explore", "connect", "abstract", "filter", "sdss", "sales", "covid"])
def test_results_are_exact_covers_in_ascending_order(log):
    cat, state = driven(log)
    ctx = mapping_context(state, cat)
    everything = frozenset(ctx.pos)
    results = search_vm(state, cat, ctx=ctx)
    assert results
    costs = [r.cost for r in results]
    assert costs == sorted(costs)
    for res in results:
        seen = set()
        for p in res.picks:
            assert seen.isdisjoint(p.covered)
            seen.update(p.covered)
        assert seen == everything
        assert viewport_legal(res.picks)
        assert res.cost == pytest.approx(cover_cost(ctx, res.picks))


def test_search_is_deterministic():
    cat, state = driven("sales")
    a = search_vm(state, cat)
    b = search_vm(state, cat)
    assert [r.cost for r in a] == [r.cost for r in b]
    assert [tuple(r.vis) for r in a] == [tuple(r.vis) for r in b]
    assert [tuple(r.picks) for r in a] == [tuple(r.picks) for r in b]


def test_equal_cost_ties_prefer_richer_chart_kinds():
    cat, state = driven("connect")
    best = search_vm(state, cat)[0]
    # a table would support the same selection at the same cost; the
    # scatter pair wins the tie
    assert [vm.kind for vm in best.vis] == ["point", "point"]


# --- replayed accounting ----------------------------------------------------


def test_one_physical_gesture_is_billed_once_over_its_union():
    cat, state = driven("sales")
    ctx = mapping_context(state, cat)
    best = search_vm(state, cat, ctx=ctx)[0]
    touchpoints, projections = touchpoints_for(ctx, best.picks)
    report = interface_cost(touchpoints, projections, n_vis=len(best.vis))
    assert report.manipulation == pytest.approx(best.cost)
    brushes = [t for t in touchpoints if t.kind == "brush_x"]
    assert len(brushes) == 1, "inner and outer date windows share one brush"


def test_random_mappings_are_legal_and_never_beat_the_search():
    cat, state = driven("filter")
    ctx = mapping_context(state, cat)
    best = search_vm(state, cat, ctx=ctx)[0]
    everything = frozenset(ctx.pos)
    rng = random.Random(7)
    seen_costs = set()
    for _ in range(25):
        res = random_mapping(ctx, rng)
        if res is None:
            continue
        covered = set()
        for p in res.picks:
            assert covered.isdisjoint(p.covered)
            covered.update(p.covered)
        assert covered == everything
        assert res.cost >= best.cost - 1e-9
        seen_costs.add(round(res.cost, 6))
    assert len(seen_costs) > 1, "sampling explores more than one cover"


# --- bound admissibility ----------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(data=st.data())
def test_widget_floor_never_exceeds_a_real_cover(data):
    cat, state = driven("covid")
    ctx = mapping_context(state, cat)
    cands = widget_candidates(ctx)
    cover = _WidgetCover(ctx, cands, 3)
    nodes = sorted(ctx.pos)
    subset = frozenset(data.draw(st.sets(st.sampled_from(nodes), max_size=len(nodes))))
    floor = cover.floor(subset)
    real = [
        sum(c.weight for c in picks)
        for picks in exact_covers(ctx, cands, subset)
    ]
    if real:
        assert floor <= min(real) + 1e-9
        assert floor == pytest.approx(min(real))


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_replay_count_is_monotone_and_subadditive(data):
    cat, state = driven("sales")
    ctx = mapping_context(state, cat)
    nodes = sorted(ctx.pos)
    a = frozenset(data.draw(st.sets(st.sampled_from(nodes), max_size=len(nodes))))
    b = frozenset(data.draw(st.sets(st.sampled_from(nodes), max_size=len(nodes))))
    assert ctx.acts(a) <= ctx.acts(a | b) <= ctx.acts(a) + ctx.acts(b)
