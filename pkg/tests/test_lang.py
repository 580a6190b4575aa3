import random

import pytest
from hypothesis import given, settings, strategies as st

from cumstl.lang import (And, Finally, Globally, Interval, IntervalError, Not, Or, ParseError,
                         Pred, TrueF, UnknownVariableError, Until, format_formula, horizon,
                         parse, to_nnf, validate_no_neg_finally)
from cumstl.semantics import robustness_series

from oracles import brute_rho, instances, random_formula


def test_precedence_and_binds_tighter_than_or():
    f = parse("x1 > 0 || x1 < 1 && x1 > 2", 1)
    assert isinstance(f, Or) and isinstance(f.right, And)


def test_temporal_operators_are_unary_prefix():
    f = parse("F[0,3] G[1,2] x1 > 0", 1)
    assert isinstance(f, Finally) and isinstance(f.arg, Globally)
    assert f.interval == Interval(0, 3) and f.arg.interval == Interval(1, 2)


def test_until_takes_atom_on_the_left():
    f = parse("(x1 > 0) U[0,4] x2 < 1", 2)
    assert isinstance(f, Until) and isinstance(f.left, Pred)


def test_parenthesized_expression_vs_formula():
    assert isinstance(parse("(x1 + 1) * 2 > 0", 1), Pred)
    assert isinstance(parse("(x1 > 0 && x1 < 1)", 1), And)


def test_true_literal():
    assert parse("true", 1) == TrueF()


@pytest.mark.parametrize("text", ["x1 >", "F[0,2 x1 > 0", "x1 > 0 &&", "x1 $ 0", "(x1 > 0"])
def test_malformed_text_raises_with_position(text):
    with pytest.raises(ParseError) as info:
        parse(text, 1)
    assert 0 <= info.value.pos <= len(text)


@pytest.mark.parametrize("text", ["F[3,3] x1 > 0", "G[4,2] x1 > 0", "F[-1,2] x1 > 0"])
def test_bad_intervals(text):
    with pytest.raises(IntervalError):
        parse(text, 1)


def test_unknown_variable():
    with pytest.raises(UnknownVariableError):
        parse("x3 > 0", 2)


def test_horizons():
    assert horizon(parse("F[0,5] G[0,10] x1 > 0", 1)) == 15
    assert horizon(parse("(x1 > 0) U[2,7] F[0,3] x1 > 1", 1)) == 10
    assert horizon(parse("x1 > 0 && G[0,4] x1 > 1", 1)) == 4


def test_negated_finally_is_located():
    f = parse("x1 > 0 && !(G[0,2] F[0,1] x1 > 0)", 1)
    assert validate_no_neg_finally(f) == (1, 0, 0)
    assert validate_no_neg_finally(parse("!!F[0,1] x1 > 0", 1)) is None
    g = parse("!((x1 > 0) U[0,2] x1 > 1)", 1)
    assert validate_no_neg_finally(g) is None
    assert validate_no_neg_finally(g, strict=True) == (0,)


def test_nnf_pushes_negation_to_atoms():
    f = to_nnf(parse("!(F[0,2] x1 > 0 || G[1,3] x1 < 1)", 1))
    assert isinstance(f, And)
    assert isinstance(f.left, Globally) and isinstance(f.left.arg, Not)
    assert isinstance(f.right, Finally)


def test_nnf_preserves_robustness():
    for f, x in instances(100, seed=3, cumulative_safe=False):
        assert list(robustness_series(to_nnf(f), x)) == list(robustness_series(f, x))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_print_parse_round_trip(seed):
    rng = random.Random(seed)
    n = rng.randint(1, 3)
    f = random_formula(rng, n, depth=4, cumulative_safe=False, allow_true=True)
    text = format_formula(f)
    g = parse(text, n)
    assert format_formula(g) == text
    assert horizon(g) == horizon(f)
    x = [[rng.uniform(-2, 2) for _ in range(horizon(f) + 1)] for _ in range(n)]
    assert brute_rho(g, x) == brute_rho(f, x)
