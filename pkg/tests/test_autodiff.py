import numpy as np
import pytest

from asymlab import autodiff as ad
from asymlab.autodiff import Tape, Tensor, no_grad
from asymlab.errors import ShapeError


def _numeric_gradient(func, value, step=1e-6):
    value = np.array(value, dtype=np.float64)
    grad = np.zeros_like(value)
    for index in np.ndindex(value.shape):
        plus, minus = value.copy(), value.copy()
        plus[index] += step
        minus[index] -= step
        grad[index] = (
            func(Tensor(plus)).item() - func(Tensor(minus)).item()
        ) / (2 * step)
    return grad


def _check(func, value):
    x = Tensor(value, requires_grad=True)
    func(x).backward()
    assert x.grad == pytest.approx(_numeric_gradient(func, value), abs=1e-6)


def test_square():
    x = Tensor(3.0, requires_grad=True)
    (x * x).backward()
    assert x.grad == pytest.approx(6.0)


def test_gradients_accumulate_until_cleared():
    x = Tensor(2.0, requires_grad=True)
    (x * 3.0).backward()
    (x * 3.0).backward()
    assert x.grad == pytest.approx(6.0)
    x.zero_grad()
    assert x.grad is None


@pytest.mark.parametrize(
    "func",
    [
        lambda x: ad.tanh(x).sum(),
        lambda x: ad.sigmoid(x * 2.0).sum(),
        lambda x: ad.exp(x).mean(),
        lambda x: ad.log(ad.exp(x) + 1.0).sum(),
        lambda x: ad.power(x * x + 1.0, 1.5).sum(),
        lambda x: (Tensor(1.0) / (x * x + 1.0)).sum(),
        lambda x: (2.0 - x).sum() * x[1],
        lambda x: ad.relu(x).sum(),
        lambda x: (ad.softmax(x) * Tensor([1.0, 2.0, 3.0])).sum(),
    ],
)
def test_elementwise_gradients(func):
    _check(func, [0.3, -0.7, 1.1])


def test_matmul_gradients():
    rng = np.random.default_rng(0)
    weight = rng.normal(size=(3, 2))
    inputs = rng.normal(size=(4, 3))
    row = Tensor(rng.normal(size=3))
    _check(lambda x: ad.tanh(x @ Tensor(weight)).sum(), inputs)
    _check(lambda w: (row @ w).sum(), weight)
    _check(lambda x: x @ x, [1.0, 2.0])


def test_matmul_rejects_mismatching_shapes():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


def test_broadcast_gradients_are_summed():
    bias = Tensor([1.0, 2.0], requires_grad=True)
    (Tensor(np.ones((3, 2))) + bias).sum().backward()
    assert bias.grad.tolist() == [3.0, 3.0]
    with pytest.raises(ShapeError):
        Tensor(np.ones(3)) + Tensor(np.ones(2))


def test_log_softmax_negative_log_likelihood():
    logits = Tensor([0.5, 1.5, -1.0], requires_grad=True)
    (-ad.log_softmax(logits)[1]).backward()
    probs = np.exp(logits.data) / np.exp(logits.data).sum()
    assert logits.grad == pytest.approx(probs - np.array([0.0, 1.0, 0.0]))


def test_log_softmax_is_stable():
    out = ad.log_softmax(Tensor([1000.0, 1000.0]))
    assert out.data == pytest.approx(np.log([0.5, 0.5]))


def test_concat_stack_and_rows():
    a = Tensor([1.0, 2.0], requires_grad=True)
    b = Tensor([3.0], requires_grad=True)
    joined = ad.concat([a, b])
    (joined * Tensor([1.0, 2.0, 3.0])).sum().backward()
    assert a.grad.tolist() == [1.0, 2.0]
    assert b.grad.tolist() == [3.0]

    c = Tensor([1.0, 1.0], requires_grad=True)
    stacked = ad.stack([c, c * 2.0])
    assert stacked.shape == (2, 2)
    stacked.sum().backward()
    assert c.grad.tolist() == [3.0, 3.0]

    table = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
    rows = ad.take_rows(table, [2, 0, 2])
    assert rows.data.tolist() == [[4.0, 5.0], [0.0, 1.0], [4.0, 5.0]]
    rows.sum().backward()
    assert table.grad.tolist() == [[1.0, 1.0], [0.0, 0.0], [2.0, 2.0]]
    with pytest.raises(ShapeError):
        ad.take_rows(table, [3])
    with pytest.raises(ShapeError):
        ad.concat([Tensor(np.ones((2, 2))), Tensor(np.ones((3, 3)))], axis=1)


def test_shared_subexpressions():
    x = Tensor(2.0, requires_grad=True)
    y = x * x
    (y * y + y).backward()
    # d/dx (x^4 + x^2) = 4x^3 + 2x
    assert x.grad == pytest.approx(36.0)


def test_no_grad_records_nothing():
    x = Tensor(1.0, requires_grad=True)
    with no_grad():
        assert not ad.is_grad_enabled()
        y = x * 2.0
    assert ad.is_grad_enabled()
    assert not y.requires_grad
    assert y.is_leaf


def test_detach_and_scale_gradient():
    x = Tensor(3.0, requires_grad=True)
    (ad.detach(x) * x).backward()
    assert x.grad == pytest.approx(3.0)
    x.zero_grad()
    ad.scale_gradient(x * x, -0.5).backward()
    assert x.grad == pytest.approx(-3.0)


def test_backward_needs_a_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ShapeError):
        (x * 2.0).backward()
    with pytest.raises(ShapeError):
        x.item()


def test_tape_records_in_creation_order():
    x = Tensor(1.5, requires_grad=True)
    with Tape() as tape:
        y = ad.tanh(x)
        z = y * y
    assert len(tape) == 2
    assert tape.nodes == [y, z]
    tape.backward(z)
    assert x.grad == pytest.approx(
        2 * np.tanh(1.5) * (1 - np.tanh(1.5) ** 2)
    )


def test_constants_do_not_require_gradients():
    out = Tensor(1.0) * 2.0 + 1.0
    assert not out.requires_grad
    out.backward()
    assert out.item() == 3.0
