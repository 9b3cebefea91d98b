import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varcheck.expr import (BinOp, Const, EvalPoint, ExprDomainError, ExprSyntaxError,
                           IndexOutOfRangeError, Pow, UnknownIdentifierError, Var,
                           evaluate, parse, partials)

from conftest import CV90, K_CV90


def point(t=0.3, x=0.2, xd=-0.4, xdd=0.7):
    return EvalPoint(t, [x], [xd], [xdd])


def test_parse_pow_tree():
    L = parse("pow(xdd1,2)", 1)
    assert L.root == Pow(Var("xdd", 1), 2.0)
    assert L.declared_autonomous


def test_parse_example_lagrangian_autonomous():
    L = parse(CV90, 1)
    assert L.declared_autonomous
    assert not parse("t*pow(xdd1,2)", 1).declared_autonomous


def test_index_out_of_range():
    with pytest.raises(IndexOutOfRangeError):
        parse("xdd2", 1)


def test_syntax_error_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse("pow(xdd1,,2)", 1)
    assert info.value.offset == 9


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError):
        parse("foo(x1)", 1)
    with pytest.raises(UnknownIdentifierError):
        parse("y1", 1)


def test_constants_substitution():
    L = parse("a*pow(xdd1,2)+b*xdd1", 1, {"a": 1, "b": 2})
    assert evaluate(L, point(xdd=-1.0)) == -1.0


def test_eval_square():
    assert evaluate(parse("pow(xdd1,2)", 1), point(xdd=3.0)) == 9.0


def test_eval_example_on_singular_candidate():
    k = K_CV90
    L = parse(CV90, 1)
    value = evaluate(L, EvalPoint(1.0, [k], [5 * k / 3], [10 * k / 9]))
    assert value == pytest.approx(0.01 * (10 * k / 9) ** 2, rel=1e-12)


def test_partials_square():
    dt, dx, dxd, dxdd = partials(parse("pow(xdd1,2)", 1), point(xdd=3.0))
    assert (dt, dx[0], dxd[0], dxdd[0]) == (0.0, 0.0, 0.0, 6.0)


def test_abs_convention_at_zero():
    *_, dxdd = partials(parse("pow(abs(xdd1),22)", 1), point(xdd=0.0))
    assert dxdd[0] == 0.0
    *_, dxdd = partials(parse("abs(xdd1)", 1), point(xdd=0.0))
    assert dxdd[0] == 0.0


def test_example_partials_on_singular_candidate():
    k = K_CV90
    L = parse(CV90, 1)
    for t in (0.25, 0.5, 1.0):
        p = EvalPoint(t, [k * t ** (5 / 3)], [5 * k / 3 * t ** (2 / 3)], [10 * k / 9 * t ** (-1 / 3)])
        _, dx, dxd, dxdd = partials(L, p)
        assert abs(dx[0]) < 1e-12 and abs(dxd[0]) < 1e-12
        assert dxdd[0] == pytest.approx(0.02 * p.xdd[0], rel=1e-12)


def test_domain_errors():
    for text, p in (("sqrt(x1)", point(x=-1.0)), ("log(x1)", point(x=0.0)),
                    ("1/x1", point(x=0.0)), ("pow(x1,0.5)", point(x=-1.0)),
                    ("pow(x1,-1)", point(x=0.0))):
        with pytest.raises(ExprDomainError):
            evaluate(parse(text, 1), p)


def test_evalpoint_rejects_nonfinite():
    with pytest.raises(ValueError):
        EvalPoint(np.nan, [0.0], [0.0], [0.0])


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        evaluate(parse("x1", 1), EvalPoint(0.0, [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]))


SMOOTH = [
    "pow(xdd1,2)+pow(x1,2)", "exp(xd1)*sin(x1)", "cos(t*xdd1)+x1*xd1",
    "sqrt(1+pow(xd1,2))*xdd1", "log(2+sin(x1))-xdd1/(2+cos(xd1))", CV90,
    "pow(x1,3)-2.5*pow(xdd1,4)+t", "max(x1,0)+min(xd1,1)",
]

coord = st.floats(-0.9, 0.9, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(text=st.sampled_from(SMOOTH), t=coord, x=coord, xd=coord, xdd=coord)
def test_partials_match_finite_differences(text, t, x, xd, xdd):
    L = parse(text, 1)
    base = np.array([t, x, xd, xdd])
    dt, dx, dxd, dxdd = partials(L, EvalPoint(t, [x], [xd], [xdd]))
    exact = np.array([dt, dx[0], dxd[0], dxdd[0]])

    def f(v):
        return evaluate(L, EvalPoint(v[0], [v[1]], [v[2]], [v[3]]))

    for j in range(4):
        h = 1e-6 * (1 + abs(base[j]))
        up, dn = base.copy(), base.copy()
        up[j] += h
        dn[j] -= h
        if "max" in text or "min" in text:
            # skip samples next to a kink
            if min(abs(x), abs(xd - 1)) < 10 * h:
                continue
        fd = (f(up) - f(dn)) / (2 * h)
        assert abs(exact[j] - fd) <= 1e-6 * max(1.0, abs(fd))


@settings(max_examples=30, deadline=None)
@given(text=st.sampled_from(SMOOTH + ["-pow(xdd1,2)", "2*-x1", "-(t+1)/3", "x1-(xd1-xdd1)"]))
def test_round_trip(text):
    L = parse(text, 1)
    again = parse(L.to_string(), 1)
    assert again.root == L.root


def test_round_trip_preserves_negative_exponent():
    L = parse("pow(x1,-2)", 1)
    assert parse(L.to_string(), 1).root == L.root


def test_purity_and_autonomy():
    L = parse(CV90, 1)
    p = point()
    assert partials(L, p)[0] == 0.0
    a, b = partials(L, p), partials(L, p)
    assert all(np.array_equal(u, v) for u, v in zip(a, b))


def test_vector_dimension():
    L = parse("pow(xdd1,2)+pow(xdd2,2)+x1*x2", 2)
    p = EvalPoint(0.0, [1.0, 2.0], [0.0, 0.0], [3.0, 4.0])
    assert evaluate(L, p) == 27.0
    _, dx, _, dxdd = partials(L, p)
    np.testing.assert_array_equal(dx, [2.0, 1.0])
    np.testing.assert_array_equal(dxdd, [6.0, 8.0])


def test_binop_structure():
    L = parse("1+2*x1", 1)
    assert L.root == BinOp("+", Const(1.0), BinOp("*", Const(2.0), Var("x", 1)))
