"""Type lattice, node schemas, result schemas, FD inference."""

import pytest

from queryboard.catalogue import Attr, Catalogue
from queryboard.ctree import ChoiceTree, lift, make
from queryboard.fixtures import load_log, seed_db
from queryboard.grammar import parse_query
from queryboard.nodes import ANY, MULTI, VAL, lit, nil
from queryboard.qschema import (
    AST_T,
    NUM_T,
    STR_T,
    Nested,
    Opt,
    Or,
    Star,
    UnknownAttribute,
    WILDCARD,
    analyze,
    is_categorical,
    is_subtype,
    node_schema,
    schema_compatible,
    type_union,
    union_compatible,
)

from util import find, swap


@pytest.fixture(scope="module")
def cars():
    return Catalogue(seed_db("cars"))


def analyzed(sql: str, cat: Catalogue):
    tree = ChoiceTree(lift(parse_query(sql)))
    return tree, analyze(tree.root, cat)


# --- type lattice ----------------------------------------------------------


def test_type_union_lattice(cars):
    hp = cars.attr("cars", "hp")
    mpg = cars.attr("cars", "mpg")
    assert type_union(hp, hp) is hp
    assert type_union(hp, mpg) == NUM_T
    assert type_union(NUM_T, STR_T) == STR_T
    assert type_union(hp, AST_T) == AST_T
    assert type_union(STR_T, NUM_T) == type_union(NUM_T, STR_T)


def test_subtype_is_domain_subset(cars):
    hp = cars.attr("cars", "hp")
    origin = cars.attr("cars", "origin")
    assert is_subtype(hp, NUM_T) and is_subtype(hp, STR_T) and is_subtype(hp, AST_T)
    assert is_subtype(origin, STR_T) and not is_subtype(origin, NUM_T)
    assert not is_subtype(NUM_T, hp)
    assert not is_subtype(STR_T, NUM_T)
    assert is_subtype(hp, hp)


def test_categorical_eligibility(cars):
    assert is_categorical(cars.attr("cars", "origin"))
    assert not is_categorical(cars.attr("cars", "hp"))
    assert is_categorical(STR_T)
    assert not is_categorical(NUM_T)


# --- analysis of lifted fixture queries ------------------------------------


def test_plain_projection_schema(cars):
    _, an = analyzed("SELECT hp, disp, id FROM cars", cars)
    assert [c.label for c in an.result] == ["hp", "disp", "id"]
    assert [c.attr.column for c in an.result] == ["hp", "disp", "id"]


def test_predicate_item_is_boolean_categorical(cars):
    _, an = analyzed("SELECT mpg, disp, id IN (1, 2) AS color FROM cars", cars)
    color = an.result[2]
    assert color.label == "color"
    assert color.attr is None
    assert isinstance(color.type, Attr) and color.type.values == (0, 1)
    assert is_categorical(color.type)


def test_cluster_keys_group_variants_together(cars):
    _, a1 = analyzed("SELECT hp, disp, id FROM cars", cars)
    _, a2 = analyzed("SELECT mpg, disp, id IN (1, 2) AS color FROM cars", cars)
    _, a3 = analyzed("SELECT mpg, disp, id IN (20, 22) AS color FROM cars", cars)
    assert a2.cluster_key == a3.cluster_key
    assert a1.cluster_key != a2.cluster_key


def test_comparison_specializes_literals(cars):
    tree, an = analyzed("SELECT hp, mpg, origin FROM cars WHERE hp BETWEEN 50 AND 60", cars)
    hp = cars.attr("cars", "hp")
    pair = find(tree.root, lambda n: n.label == "pair")
    assert all(an.types[end.node_id] is hp for end in pair.children)


def test_in_list_specializes_elements(cars):
    tree, an = analyzed("SELECT mpg FROM cars WHERE id IN (1, 2)", cars)
    idattr = cars.attr("cars", "id")
    elems = find(tree.root, lambda n: n.label == "inlist")
    assert all(an.types[e.node_id] is idattr for e in elems.children)


def test_equality_pins_attribute():
    cat = Catalogue(seed_db("covid"))
    tree, an = analyzed("SELECT date, cases FROM covid WHERE state = 'CA'", cat)
    assert an.branches[0].pinned == {cat.attr("covid", "state")}
    # composite key (date, state) with state pinned: date determines cases
    assert an.fd_holds({0}, 1)
    assert not an.fd_holds({1}, 0)


def test_date_call_comparison_does_not_specialize_modifier():
    cat = Catalogue(seed_db("covid"))
    tree, an = analyzed(
        "SELECT date, cases FROM covid WHERE state = 'WA' AND date > date(today(), '-30 days')",
        cat,
    )
    modifier = find(tree.root, lambda n: n.label == "lit" and n.payload == "-30 days")
    assert an.types.get(modifier.node_id) is None  # stays a plain string


def test_group_by_functional_dependency():
    cat = Catalogue(seed_db("flights"))
    _, an = analyzed("SELECT hour, count(*) FROM flights GROUP BY hour", cat)
    assert an.result[1].aggregate
    assert an.fd_holds({0}, 1)
    assert not an.fd_holds(set(), 0)


def test_correlated_subquery_resolution():
    cat = Catalogue(seed_db("sales"))
    sql = (
        "SELECT city, product, sum(total) FROM sales AS ss "
        "WHERE ss.date BETWEEN '2019-01-25' AND '2019-02-15' "
        "GROUP BY city, product "
        "HAVING sum(total) >= (SELECT max(t) FROM "
        "(SELECT sum(total) AS t FROM sales AS s "
        "WHERE s.city = ss.city AND s.date BETWEEN '2019-01-25' AND '2019-02-15' "
        "GROUP BY s.city, s.product))"
    )
    tree, an = analyzed(sql, cat)
    assert [c.label for c in an.result] == ["city", "product", "sum"]
    assert an.fd_holds({0, 1}, 2)
    assert not an.fd_holds({0}, 2)
    date = cat.attr("sales", "date")
    endpoints = [
        n for n in tree.nodes.values() if n.label == "lit" and n.payload == "2019-01-25"
    ]
    assert len(endpoints) == 2  # outer and inner windows
    assert all(an.types[e.node_id] is date for e in endpoints)


def test_join_blocks_functional_dependencies():
    cat = Catalogue(seed_db("sdss"))
    sql = (
        "SELECT gal.u, gal.g FROM galaxy AS gal, specObj AS s "
        "WHERE s.bestObjID = gal.objID AND s.z BETWEEN 0.1362 AND 0.141"
    )
    tree, an = analyzed(sql, cat)
    assert len(an.branches[0].tables) == 2
    assert not an.fd_holds({0}, 1)
    z = cat.attr("specObj", "z")
    pair = find(tree.root, lambda n: n.label == "pair")
    assert all(an.types[e.node_id] is z for e in pair.children)


def test_unknown_attribute_raises(cars):
    with pytest.raises(UnknownAttribute):
        analyzed("SELECT nonsense FROM cars", cars)
    with pytest.raises(UnknownAttribute):
        analyzed("SELECT hp FROM nonsense", cars)


def test_whole_corpus_analyzes():
    from queryboard.fixtures import LOGS, DATASETS

    for log, dataset in LOGS.items():
        cat = Catalogue(seed_db(dataset))
        for query in load_log(log):
            an = analyze(lift(query), cat)
            assert an.result is not None, log


# --- node schemas ----------------------------------------------------------


def test_val_node_schema(cars):
    ast = lift(parse_query("SELECT hp FROM cars WHERE hp = 100"))
    target = find(ast, lambda n: n.label == "lit" and n.payload == "100")
    val = make(VAL, "val", (lit("100", "num"),), littype="num")
    tree = ChoiceTree(lift(swap(ast, target, val)))
    an = analyze(tree.root, cars)
    hp = cars.attr("cars", "hp")
    assert node_schema(val, an.types) == (hp,)
    assert node_schema(tree.root, an.types) == (hp,)


def test_optional_between_schema(cars):
    ast = lift(parse_query("SELECT hp FROM cars WHERE mpg = 1 AND hp BETWEEN 50 AND 60"))
    between = find(ast, lambda n: n.label == "between")
    pair = between.children[1]
    v1 = make(VAL, "val", (pair.children[0],), littype="num")
    v2 = make(VAL, "val", (pair.children[1],), littype="num")
    with_vals = swap(swap(ast, pair.children[0], v1), pair.children[1], v2)
    between = find(with_vals, lambda n: n.label == "between")
    opt = make(ANY, "any", (nil(), between))
    tree = ChoiceTree(lift(swap(with_vals, between, opt)))
    an = analyze(tree.root, cars)
    hp = cars.attr("cars", "hp")
    assert node_schema(opt, an.types) == (Opt(Nested((hp, hp))),)


def test_any_schemas(cars):
    # all-literal children fold to the union type
    ast = lift(parse_query("SELECT hp FROM cars WHERE hp = 100"))
    target = find(ast, lambda n: n.label == "lit" and n.payload == "100")
    any_node = make(ANY, "any", (lit("100", "num"), lit("200", "num")))
    tree = ChoiceTree(lift(swap(ast, target, any_node)))
    an = analyze(tree.root, cars)
    assert node_schema(any_node, an.types) == (cars.attr("cars", "hp"),)

    # static non-literal children fold to ast
    c1 = lift(parse_query("SELECT hp FROM cars WHERE hp = 1"))
    c2 = lift(parse_query("SELECT hp FROM cars WHERE mpg = 2"))
    cmp1 = find(c1, lambda n: n.label == "cmp")
    cmp2 = find(c2, lambda n: n.label == "cmp")
    pred_any = make(ANY, "any", (cmp1, cmp2))
    assert node_schema(pred_any, {}) == (AST_T,)


def test_multi_schema(cars):
    ast = lift(parse_query("SELECT mpg FROM cars WHERE id IN (1)"))
    inlist = find(ast, lambda n: n.label == "inlist")
    template = make(VAL, "val", (lit("1", "num"),), littype="num")
    multi = make(MULTI, "inlist", (template,))
    tree = ChoiceTree(lift(swap(ast, inlist, multi)))
    an = analyze(tree.root, cars)
    assert node_schema(multi, an.types) == (Star(cars.attr("cars", "id")),)


def test_dynamic_any_schema_uses_or():
    v = make(VAL, "val", (lit("1", "num"),), littype="num")
    cmp_static = lift(parse_query("SELECT hp FROM cars WHERE mpg = 2"))
    static_child = find(cmp_static, lambda n: n.label == "cmp")
    dyn_parent = make(ANY, "any", (static_child, v))
    schema = node_schema(dyn_parent, {})
    assert schema == (Or((AST_T, Nested((NUM_T,)))),)


# --- schema compatibility --------------------------------------------------


def test_schema_compatibility_rules(cars):
    hp = cars.attr("cars", "hp")
    origin = cars.attr("cars", "origin")
    assert schema_compatible((hp,), (WILDCARD,))
    assert schema_compatible((hp, hp), (NUM_T, NUM_T))
    assert not schema_compatible((origin,), (NUM_T,))
    assert schema_compatible((origin,), (STR_T,))
    assert not schema_compatible((hp,), (NUM_T, NUM_T))
    assert schema_compatible((Or((hp, NUM_T)),), (NUM_T,))
    assert not schema_compatible((Or((hp, origin)),), (NUM_T,))
    # wildcard refuses structure operators
    assert not schema_compatible((Opt(hp),), (WILDCARD,))
    assert not schema_compatible((Star(hp),), (WILDCARD,))
    assert schema_compatible((Opt(hp),), (Opt(WILDCARD),))
    assert schema_compatible((Star(hp),), (Star(WILDCARD),))
    assert schema_compatible((Nested((hp, hp)),), (WILDCARD,))
    assert schema_compatible((Opt(Nested((hp, hp))),), (Opt(Nested((NUM_T, NUM_T))),))


def test_union_compatibility():
    covid = Catalogue(seed_db("covid"))
    _, cases = analyzed("SELECT date, cases FROM covid WHERE state = 'CA'", covid)
    _, deaths = analyzed("SELECT date, deaths FROM covid WHERE state = 'NY'", covid)
    assert union_compatible(cases.result, deaths.result)
    sales = Catalogue(seed_db("sales"))
    _, a = analyzed("SELECT city, product, sum(total) FROM sales GROUP BY city, product", sales)
    _, b = analyzed("SELECT date, sum(total) FROM sales GROUP BY date", sales)
    assert not union_compatible(a.result, b.result)
    assert not union_compatible(a.result, None)
