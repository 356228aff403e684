"""Choice-tree semantics: witnesses, resolution, enumeration."""

import pytest

from queryboard import ctree
from queryboard.ctree import (
    ABSENT,
    ChoiceTree,
    UnexpressedQuery,
    enumerate_bindings,
    expresses,
    expressible_set,
    lift,
    make,
    query_bindings,
    resolve,
)
from queryboard.grammar import parse_query, unparse
from queryboard.nodes import ANY, COOPT, MULTI, SUBSET, VAL, lit, nil, shape_key, walk

from util import find, swap


def tree_with_val(values=("1", "2")) -> ChoiceTree:
    """``select p, count(*) from t where a = <val> group by p``."""
    ast = lift(parse_query("SELECT p, count(*) FROM t WHERE a = 1 GROUP BY p"))
    target = find(ast, lambda n: n.label == "lit" and n.payload == "1")
    val = make(VAL, "val", tuple(lit(v, "num") for v in values), littype="num")
    return ChoiceTree(lift(swap(ast, target, val)))


def test_lift_assigns_unique_ids():
    ast = lift(parse_query("SELECT hp FROM cars WHERE hp BETWEEN 50 AND 60"))
    ids = [n.node_id for n in walk(ast)]
    assert all(i > 0 for i in ids)
    assert len(ids) == len(set(ids))


def test_val_witness_and_resolution():
    tree = tree_with_val()
    val = tree.choices[0]
    q1 = parse_query("SELECT p, count(*) FROM t WHERE a = 1 GROUP BY p")
    q2 = parse_query("SELECT p, count(*) FROM t WHERE a = 2 GROUP BY p")
    w1 = expresses(tree, q1)
    w2 = expresses(tree, q2)
    assert w1[val.node_id] == ("val", 1)
    assert w2[val.node_id] == ("val", 2)
    assert unparse(resolve(tree.root, w2)) == "select p, count(*) from t where a = 2 group by p"
    # a val node passes through any literal of its primitive type
    w3 = expresses(tree, parse_query("SELECT p, count(*) FROM t WHERE a = 9 GROUP BY p"))
    assert w3[val.node_id] == ("val", 9)
    assert expresses(tree, parse_query("SELECT p, count(*) FROM t WHERE a = 'x' GROUP BY p")) is None
    assert expresses(tree, parse_query("SELECT p FROM t WHERE a = 1")) is None


def test_optional_conjunct_witness():
    ast = lift(parse_query("SELECT hp FROM cars WHERE hp = 100 AND mpg = 20"))
    second = find(ast, lambda n: n.label == "cmp" and n.children[0].payload == "mpg")
    opt = make(ANY, "any", (nil(), second))
    tree = ChoiceTree(lift(swap(ast, second, opt)))
    with_both = expresses(tree, parse_query("SELECT hp FROM cars WHERE hp = 100 AND mpg = 20"))
    assert with_both[opt.node_id] == ("any", 1)
    shorter = expresses(tree, parse_query("SELECT hp FROM cars WHERE hp = 100"))
    assert shorter[opt.node_id] == ("any", 0)
    assert unparse(resolve(tree.root, shorter)) == "select hp from cars where hp = 100"
    assert expresses(tree, parse_query("SELECT hp FROM cars WHERE mpg = 20")) is None


def test_multi_witness_and_resolution():
    ast = lift(parse_query("SELECT mpg FROM cars WHERE id IN (1)"))
    inlist = find(ast, lambda n: n.label == "inlist")
    template = make(VAL, "val", (lit("1", "num"),), littype="num")
    multi = make(MULTI, "inlist", (template,))
    tree = ChoiceTree(lift(swap(ast, inlist, multi)))
    w = expresses(tree, parse_query("SELECT mpg FROM cars WHERE id IN (1, 2, 5)"))
    kind, subs = w[multi.node_id]
    assert kind == "multi" and len(subs) == 3
    assert [sub[template.node_id] for sub in subs] == [("val", 1), ("val", 2), ("val", 5)]
    assert (
        unparse(resolve(tree.root, w)) == "select mpg from cars where id in (1, 2, 5)"
    )


def test_subset_witness():
    ast = lift(parse_query("SELECT hp FROM cars WHERE hp = 1 AND mpg = 2 AND disp = 3"))
    conj = find(ast, lambda n: n.label == "conj")
    subset = make(SUBSET, "conj", conj.children)
    tree = ChoiceTree(lift(swap(ast, conj, subset)))
    w = expresses(tree, parse_query("SELECT hp FROM cars WHERE hp = 1 AND disp = 3"))
    assert w[subset.node_id] == ("subset", (0, 2))
    assert expresses(tree, parse_query("SELECT hp FROM cars WHERE disp = 3 AND hp = 1")) is None
    assert unparse(resolve(tree.root, w)) == "select hp from cars where hp = 1 and disp = 3"


def coopt_tree():
    """Where-clause co-opted to an optional second conjunct.

    select hp from cars where [hp = 100 and [mpg = 20]?]^coopt
    """
    ast = lift(parse_query("SELECT hp FROM cars WHERE hp = 100 AND mpg = 20"))
    second = find(ast, lambda n: n.label == "cmp" and n.children[0].payload == "mpg")
    opt = make(ANY, "any", (nil(), second))
    conj = find(ast, lambda n: n.label == "conj")
    new_conj = swap(conj, second, opt)
    coopt = make(COOPT, "coopt", (new_conj,), ref=opt.node_id)
    return ChoiceTree(lift(swap(ast, conj, coopt))), opt, coopt


def test_coopt_links_region_to_controller():
    tree, opt, coopt = coopt_tree()
    on = expresses(tree, parse_query("SELECT hp FROM cars WHERE hp = 100 AND mpg = 20"))
    assert on[opt.node_id] == ("any", 1)
    assert on[coopt.node_id] == ("coopt", True)
    off = expresses(tree, parse_query("SELECT hp FROM cars"))
    assert off is not None and coopt.node_id not in off and opt.node_id not in off
    assert unparse(resolve(tree.root, off)) == "select hp from cars"
    # controller off but region present is not expressible
    assert expresses(tree, parse_query("SELECT hp FROM cars WHERE hp = 100")) is None


def test_coopt_enumeration_respects_linkage():
    tree, _, _ = coopt_tree()
    shapes = expressible_set(tree)
    assert shapes == {
        shape_key(parse_query("SELECT hp FROM cars")),
        shape_key(parse_query("SELECT hp FROM cars WHERE hp = 100 AND mpg = 20")),
    }


def test_expressible_set_product():
    tree = tree_with_val(("1", "2", "3"))
    shapes = expressible_set(tree)
    expected = {
        shape_key(parse_query(f"SELECT p, count(*) FROM t WHERE a = {v} GROUP BY p"))
        for v in (1, 2, 3)
    }
    assert shapes == expected


def test_multi_enumeration_bound():
    ast = lift(parse_query("SELECT mpg FROM cars WHERE id IN (1)"))
    inlist = find(ast, lambda n: n.label == "inlist")
    template = make(VAL, "val", (lit("1", "num"), lit("2", "num")), littype="num")
    multi = make(MULTI, "inlist", (template,))
    tree = ChoiceTree(lift(swap(ast, inlist, multi)))
    bindings = list(enumerate_bindings(tree, multi_bound=3))
    assert len(bindings) == 1 + 2 + 4 + 8  # zero repetitions included
    shapes = expressible_set(tree, multi_bound=1)
    assert len(shapes) == 3


def test_every_enumerated_binding_round_trips():
    tree = tree_with_val(("5", "7"))
    for binding in enumerate_bindings(tree):
        resolved = resolve(tree.root, binding)
        again = expresses(tree, parse_query(unparse(resolved)))
        assert shape_key(resolve(tree.root, again)) == shape_key(resolved)


def test_query_bindings_assignment():
    t1 = tree_with_val(("1", "2"))
    t2 = ChoiceTree(lift(parse_query("SELECT a FROM t")))
    queries = [
        parse_query("SELECT p, count(*) FROM t WHERE a = 2 GROUP BY p"),
        parse_query("SELECT a FROM t"),
        parse_query("SELECT p, count(*) FROM t WHERE a = 1 GROUP BY p"),
    ]
    qb = query_bindings([t1, t2], queries)
    assert [ti for ti, _ in qb.witnesses] == [0, 1, 0]
    assert qb.by_tree == {0: [0, 2], 1: [1]}
    val_id = t1.choices[0].node_id
    assert qb.observed(0, val_id) == [("val", 2), ("val", 1)]
    with pytest.raises(UnexpressedQuery):
        query_bindings([t2], [parse_query("SELECT b FROM t")])


def test_static_tree_has_no_choices():
    tree = ChoiceTree(lift(parse_query("SELECT a FROM t")))
    assert tree.static
    assert expresses(tree, parse_query("SELECT a FROM t")) == {}
    assert expressible_set(tree) == {shape_key(parse_query("SELECT a FROM t"))}
