import numpy as np
import pytest

from hydrochain.exprs import ExpressionError, compile_profile


def test_basic_arithmetic():
    u = np.linspace(0, 1, 11)
    f = compile_profile("1 + u/2")
    assert np.allclose(f(u), 1 + u / 2)
    g = compile_profile("2*u - u^2")
    assert np.allclose(g(u), 2 * u - u**2)
    h = compile_profile("u**3 / 4")
    assert np.allclose(h(u), u**3 / 4)


def test_functions_and_constants():
    u = np.linspace(0, 1, 7)
    f = compile_profile("sin(pi*u)^2")
    assert np.allclose(f(u), np.sin(np.pi * u) ** 2)
    g = compile_profile("exp(-u) + cos(2*u)")
    assert np.allclose(g(u), np.exp(-u) + np.cos(2 * u))
    assert np.allclose(compile_profile("e")(u), np.e)


def test_constant_broadcasts():
    u = np.linspace(0, 1, 5)
    f = compile_profile("1.5")
    out = f(u)
    assert out.shape == u.shape and np.all(out == 1.5)


def test_unary_minus():
    u = np.array([0.2, 0.8])
    assert np.allclose(compile_profile("-u + +1")(u), 1 - u)


def test_rejections():
    for bad in ("__import__('os')", "u.x", "f(u)", "v + 1", "u @ u",
                "lambda x: x", "[1,2]", "u if u else 0", "'str'"):
        with pytest.raises(ExpressionError):
            compile_profile(bad)(np.zeros(3))


def test_syntax_error():
    with pytest.raises(ExpressionError):
        compile_profile("1 +")
