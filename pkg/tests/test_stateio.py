import pytest

from ealgebra import (
    Element,
    FunctionName,
    Location,
    ParseError,
    StateValidityError,
    UNDEF,
    FALSE,
    TRUE,
    format_state,
    make_vocabulary,
    parse_element,
    parse_state,
)


@pytest.fixture(scope="module")
def vocab():
    return make_vocabulary(
        [
            FunctionName("Fork", 1),
            FunctionName("Parent", 1),
            FunctionName("Edge", 2, is_relation=True),
            FunctionName("think", 0, is_static=True),
        ],
        with_reserve=True,
        integers=True,
    )


def test_element_literals(vocab):
    assert parse_element("p0") == Element.named("p0")
    assert parse_element("42") == Element.integer(42)
    assert parse_element("true") == TRUE
    assert parse_element("undef") == UNDEF
    assert parse_element("@3") == Element.reserve(3)
    with pytest.raises(ParseError):
        parse_element("@x")


def test_facts_and_defaults(vocab):
    s = parse_state("Fork(p0) = down\nEdge(a, b) = true\n# comment\n", vocab)
    assert s.read(Location("Fork", (Element.named("p0"),))) == Element.named("down")
    assert s.read(Location("Edge", (Element.named("a"), Element.named("b")))) == TRUE
    assert s.read(Location("Edge", (Element.named("b"), Element.named("a")))) == FALSE
    assert s.read(Location("Parent", (Element.named("p0"),))) == UNDEF


def test_constants_are_seeded(vocab):
    s = parse_state("", vocab, constants=("think",))
    assert s.read(Location("think")) == Element.named("think")


def test_unknown_name_and_arity_errors(vocab):
    with pytest.raises(ParseError):
        parse_state("Nope(a) = b", vocab)
    with pytest.raises(ParseError):
        parse_state("Fork(a, b) = up", vocab)
    with pytest.raises(ParseError):
        parse_state("what is this", vocab)


def test_reserve_directive_and_mentions(vocab):
    s = parse_state("reserve: 4\nParent(@1) = root", vocab)
    assert s.reserve_next == 4
    assert s.audit_proviso() == []
    with pytest.raises(StateValidityError):
        parse_state("reserve: 1\nParent(@1) = root", vocab)


def test_format_parse_round_trip(vocab):
    text = "reserve: 2\nEdge(a, b) = true\nFork(p0) = down\nParent(@1) = root\n"
    s = parse_state(text, vocab)
    assert format_state(s) == text
    assert parse_state(format_state(s), vocab) == s
