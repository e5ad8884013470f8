import numpy as np
import pytest

from captkit.errors import (
    DataFormatError,
    DomainError,
    UnsupportedConstructError,
)
from captkit.grammar import (
    EPSILON,
    Alt,
    Edge,
    Grammar,
    Opt,
    Seq,
    Sym,
    build_alignment_grammar,
    build_insdel_grammar,
    build_substitution_grammar,
    compile,
    dump,
    enumerate_language,
    from_expr,
    parse_jsgf,
    serialize_jsgf,
)
from captkit.phoneset import SIL


# ---------------------------------------------------------------------------
# Builders


def test_substitution_language_has_40_strings(inventory):
    g = build_substitution_grammar("K", "T", inventory)
    lang = enumerate_language(g)
    assert len(lang) == 40
    for s in lang:
        assert len(s) == 3
        assert s[0] == "K"
        assert s[2] == "T"
    middles = {s[1] for s in lang}
    assert middles == set(inventory.symbols)


def test_insdel_language_has_80_strings(inventory):
    g = build_insdel_grammar("K", "T", inventory)
    lang = enumerate_language(g)
    assert len(lang) == 80
    assert ("K",) in lang
    assert ("K", "T") in lang
    two = {s for s in lang if len(s) == 2 and s[1] != "T"}
    three = {s for s in lang if len(s) == 3}
    assert len(two) == 39
    assert len(three) == 39
    for s in three:
        assert s[0] == "K" and s[2] == "T" and s[1] != "T"
    assert ("K", "T", "T") not in lang


def test_insdel_insertion_includes_silence(inventory):
    g = build_insdel_grammar("K", "T", inventory)
    lang = enumerate_language(g)
    assert ("K", SIL) in lang
    assert ("K", SIL, "T") in lang


def test_alignment_edges_only_language(inventory):
    g = build_alignment_grammar(["K", "AE", "T"], inventory)
    lang = enumerate_language(g)
    base = ("K", "AE", "T")
    assert lang == {
        base,
        (SIL,) + base,
        base + (SIL,),
        (SIL,) + base + (SIL,),
    }


def test_alignment_between_words_language(inventory):
    g = build_alignment_grammar(
        [["K", "AE", "T"], ["D", "AO", "G"]], inventory,
        silence_policy="between_words",
    )
    lang = enumerate_language(g)
    a, b = ("K", "AE", "T"), ("D", "AO", "G")
    assert lang == {a + b, a + (SIL,) + b}


def test_alignment_none_language(inventory):
    g = build_alignment_grammar(
        [["K", "AE"], ["T", "IY"]], inventory, silence_policy="none"
    )
    assert enumerate_language(g) == {("K", "AE", "T", "IY")}


def test_alignment_flat_list_is_one_word(inventory):
    flat = build_alignment_grammar(["K", "AE"], inventory, "between_words")
    # a single word has no interior boundary, so no silence anywhere
    assert enumerate_language(flat) == {("K", "AE")}


def test_alignment_rejects_bad_policy(inventory):
    with pytest.raises(DomainError):
        build_alignment_grammar(["K"], inventory, "everywhere")
    with pytest.raises(DomainError):
        build_alignment_grammar([], inventory)
    with pytest.raises(DomainError):
        build_alignment_grammar([[]], inventory)
    with pytest.raises(DomainError):
        build_alignment_grammar(["QQ"], inventory)


# ---------------------------------------------------------------------------
# Compilation and validation


def test_compile_removes_epsilon(inventory):
    g = build_alignment_grammar(["K", "AE"], inventory)
    cg = compile(g, inventory)
    for arcs in cg.arcs_from.values():
        for arc in arcs:
            assert arc.phoneme != EPSILON
    assert sorted(a.id for arcs in cg.arcs_from.values() for a in arcs) == list(
        range(sum(len(v) for v in cg.arcs_from.values()))
    )


def test_compile_rejects_unknown_symbol(inventory):
    g = from_expr(Sym("QQ"), name="bad")
    with pytest.raises(DomainError):
        compile(g, inventory)


def test_validate_rejects_out_of_range_edges():
    g = Grammar(name="g", num_states=2, start=0, accepting=frozenset({1}),
                edges=(Edge(0, 5, "K"),), expr=None)
    with pytest.raises(DomainError):
        g.validate()


def test_validate_rejects_epsilon_cycle():
    g = Grammar(name="g", num_states=2, start=0, accepting=frozenset({1}),
                edges=(Edge(0, 1, EPSILON), Edge(1, 0, EPSILON)), expr=None)
    with pytest.raises(DomainError):
        g.validate()


def test_validate_rejects_unreachable_accepting():
    g = Grammar(name="g", num_states=3, start=0, accepting=frozenset({2}),
                edges=(Edge(0, 1, "K"),), expr=None)
    with pytest.raises(DomainError):
        g.validate()


def test_enumerate_cyclic_needs_max_len():
    g = Grammar(name="loop", num_states=2, start=0, accepting=frozenset({1}),
                edges=(Edge(0, 1, "K"), Edge(1, 1, "K")), expr=None)
    with pytest.raises(DomainError):
        enumerate_language(g)
    lang = enumerate_language(g, max_len=3)
    assert lang == {("K",), ("K", "K"), ("K", "K", "K")}


def test_accepts_empty_flag(inventory):
    g = from_expr(Opt(Sym("K")), name="maybe")
    cg = compile(g, inventory)
    assert cg.accepts_empty
    cg2 = compile(from_expr(Sym("K"), name="must"), inventory)
    assert not cg2.accepts_empty


def test_dump_is_stable(inventory):
    g = build_alignment_grammar(["K", "AE"], inventory)
    assert dump(g) == dump(g)
    assert "grammar" in dump(g)


# ---------------------------------------------------------------------------
# JSGF subset


CANONICAL = """#JSGF V1.0;
grammar practice;
public <main> = [ SIL ] K AE T [ SIL ];
"""


def test_parse_canonical(inventory):
    g = parse_jsgf(CANONICAL)
    assert g.name == "practice"
    lang = enumerate_language(compile(g, inventory))
    assert ("K", "AE", "T") in lang
    assert (SIL, "K", "AE", "T", SIL) in lang
    assert len(lang) == 4


def test_parse_alternatives_and_groups(inventory):
    text = "#JSGF V1.0;\ngrammar g;\npublic <main> = K ( AE | IY ) T;\n"
    lang = enumerate_language(compile(parse_jsgf(text), inventory))
    assert lang == {("K", "AE", "T"), ("K", "IY", "T")}


def test_parse_errors_carry_position():
    bad = "#JSGF V1.0;\ngrammar g;\npublic <main> = K | ;\n"
    with pytest.raises(DataFormatError) as err:
        parse_jsgf(bad)
    assert "3" in str(err.value)  # line number


def test_parse_rejects_missing_grammar_declaration():
    with pytest.raises(DataFormatError):
        parse_jsgf("#JSGF V1.0;\npublic <main> = K;\n")


def test_parse_rejects_empty():
    with pytest.raises(DataFormatError):
        parse_jsgf("   ")


@pytest.mark.parametrize(
    "body",
    [
        "K *",
        "K +",
        "K <other>",
        "K {tag}",
        "/0.5/ K",
    ],
)
def test_unsupported_constructs(body):
    text = f"#JSGF V1.0;\ngrammar g;\npublic <main> = {body};\n"
    with pytest.raises(UnsupportedConstructError):
        parse_jsgf(text)


def test_unsupported_import():
    text = "#JSGF V1.0;\ngrammar g;\nimport <other.*>;\npublic <main> = K;\n"
    with pytest.raises(UnsupportedConstructError):
        parse_jsgf(text)


def test_unsupported_private_rule():
    text = "#JSGF V1.0;\ngrammar g;\n<main> = K;\n"
    with pytest.raises(UnsupportedConstructError):
        parse_jsgf(text)


def test_unsupported_second_rule():
    text = ("#JSGF V1.0;\ngrammar g;\npublic <main> = K;\n"
            "public <other> = T;\n")
    with pytest.raises(UnsupportedConstructError):
        parse_jsgf(text)


def _random_expr(rng, inventory, depth):
    symbols = inventory.symbols
    if depth <= 0 or rng.random() < 0.35:
        return Sym(symbols[int(rng.integers(len(symbols)))])
    kind = rng.random()
    if kind < 0.4:
        parts = tuple(
            _random_expr(rng, inventory, depth - 1)
            for _ in range(int(rng.integers(1, 4)))
        )
        return Seq(parts)
    if kind < 0.75:
        options = tuple(
            _random_expr(rng, inventory, depth - 1)
            for _ in range(int(rng.integers(2, 4)))
        )
        return Alt(options)
    return Opt(_random_expr(rng, inventory, depth - 1))


def test_jsgf_round_trip_50_grammars(inventory):
    rng = np.random.default_rng(1234)
    for i in range(50):
        expr = _random_expr(rng, inventory, depth=3)
        g = from_expr(expr, name=f"g{i}")
        text = serialize_jsgf(g)
        again = parse_jsgf(text)
        lang_a = enumerate_language(compile(g, inventory), max_len=12)
        lang_b = enumerate_language(compile(again, inventory), max_len=12)
        assert lang_a == lang_b, f"grammar {i} language changed"


def test_serialize_without_expr_falls_back_to_enumeration(inventory):
    g = Grammar(name="manual", num_states=3, start=0,
                accepting=frozenset({2}),
                edges=(Edge(0, 1, "K"), Edge(1, 2, "T"), Edge(1, 2, "D")),
                expr=None)
    text = serialize_jsgf(g)
    again = parse_jsgf(text)
    assert enumerate_language(compile(again, inventory)) == {
        ("K", "T"), ("K", "D")
    }


def test_builders_round_trip_through_jsgf(inventory):
    for g in (
        build_substitution_grammar("K", "T", inventory),
        build_insdel_grammar("B", "D", inventory),
        build_alignment_grammar([["K", "AE"], ["T", "IY"]], inventory,
                                "between_words"),
    ):
        again = parse_jsgf(serialize_jsgf(g))
        assert enumerate_language(compile(again, inventory)) == enumerate_language(
            compile(g, inventory)
        )
