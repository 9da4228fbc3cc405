import numpy as np
import pytest

from cauchyop.container import read_container, write_container
from cauchyop.expr import ExpressionError, compile_expression


def test_expression_values():
    f = compile_expression("1 + 0.2*sin(x) * exp(-t)")
    t = np.array([[0.0], [1.0]])
    x = np.array([[[0.0], [np.pi / 2]]])
    assert np.allclose(f(t, x), 1 + 0.2 * np.sin(x[..., 0]) * np.exp(-t))
    assert f.depends_on_t and f.depends_on_x
    g = compile_expression("2 + 0.5j*cos(x1 - x2)", n=2)
    assert not g.depends_on_t
    xx = np.array([[[0.3, 0.1]]])
    assert np.isclose(g(0.0, xx), 2 + 0.5j * np.cos(0.2))


@pytest.mark.parametrize("bad", ["__import__('os')", "x.real", "foo + 1", "sin(x, out=x)", "1 +", "'a'"])
def test_expression_rejects(bad):
    with pytest.raises(ExpressionError):
        compile_expression(bad)


def test_container_roundtrip(tmp_path):
    arrays = {"a": np.arange(6, dtype=float).reshape(2, 3), "b": np.array([1 + 2j, 3j])}
    write_container(tmp_path / "x.cop", {"kind": "demo", "k": 3}, arrays)
    head, back = read_container(tmp_path / "x.cop")
    assert head["kind"] == "demo" and head["k"] == 3
    for k in arrays:
        assert np.array_equal(arrays[k], back[k])


def test_container_is_deterministic(tmp_path):
    arrays = {"v": np.linspace(0, 1, 7) * (1 + 1j)}
    write_container(tmp_path / "1.cop", {"z": 1, "a": 2}, arrays)
    write_container(tmp_path / "2.cop", {"a": 2, "z": 1}, arrays)
    assert (tmp_path / "1.cop").read_bytes() == (tmp_path / "2.cop").read_bytes()


def test_container_rejects(tmp_path):
    (tmp_path / "bad").write_bytes(b"NOTACONT" + b"\0" * 20)
    with pytest.raises(ValueError):
        read_container(tmp_path / "bad")
    with pytest.raises(TypeError):
        write_container(tmp_path / "o.cop", {}, {"s": np.array(["a"])})
