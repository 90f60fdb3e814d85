import numpy as np
import pytest

from hiergc import autodiff as ad
from hiergc.optim import AdamState, adam_step


def test_softplus_at_zero():
    out = ad.softplus(ad.tensor([[0.0]]))
    assert out.data[0, 0] == pytest.approx(np.log(2.0), abs=1e-15)


def test_softplus_overflow_safe():
    out = ad.softplus(ad.tensor([[1000.0, -1000.0]]))
    assert np.all(np.isfinite(out.data))
    assert out.data[0, 0] == pytest.approx(1000.0)
    assert out.data[0, 1] == pytest.approx(0.0, abs=1e-300)
    sym = ad.neg_softplus_sym(ad.tensor([[800.0, -800.0]]))
    assert np.allclose(sym.data, -800.0)


def test_softmax_symmetry():
    out = ad.softmax_rows(ad.tensor([[0.0, 0.0]]))
    assert np.allclose(out.data, [[0.5, 0.5]])


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    out = ad.softmax_rows(ad.tensor(rng.standard_normal((40, 7)) * 30))
    assert np.allclose(out.data.sum(axis=1), 1.0, atol=1e-12)


def test_cross_entropy_single_row():
    val = ad.cross_entropy(ad.tensor([[0.25, 0.75]]), np.array([[0.0, 1.0]]))
    assert val.item() == pytest.approx(-np.log(0.75), abs=1e-15)


def test_cross_entropy_mean_over_rows():
    p = ad.tensor([[0.5, 0.5], [0.9, 0.1]])
    y = np.array([[1.0, 0.0], [1.0, 0.0]])
    expected = (-np.log(0.5) - np.log(0.9)) / 2.0
    assert ad.cross_entropy(p, y).item() == pytest.approx(expected, abs=1e-15)


def test_backward_sum_gives_ones():
    w = ad.parameter(np.arange(4.0).reshape(2, 2))
    ad.backward(ad.sum_all(w))
    assert np.array_equal(w.grad, np.ones((2, 2)))


def test_backward_square():
    x = ad.parameter(np.array([[3.0]]))
    ad.backward(ad.mul(x, x))
    assert x.grad[0, 0] == pytest.approx(6.0)


def test_backward_accumulates_across_uses():
    x = ad.parameter(np.array([[2.0]]))
    # f = x*x + x -> f' = 2x + 1 = 5
    ad.backward(ad.add(ad.mul(x, x), x))
    assert x.grad[0, 0] == pytest.approx(5.0)


def test_backward_rejects_non_scalar():
    x = ad.parameter(np.ones((2, 2)))
    with pytest.raises(ValueError, match="scalar"):
        ad.backward(ad.relu(x))


def test_shape_mismatch_reports_op():
    with pytest.raises(ValueError, match="matmul"):
        ad.matmul(ad.tensor(np.ones((2, 3))), ad.tensor(np.ones((2, 3))))
    with pytest.raises(ValueError, match="add"):
        ad.add(ad.tensor(np.ones((2, 3))), ad.tensor(np.ones((3, 2))))


def test_grad_check_three_layer_composite():
    rng = np.random.default_rng(7)
    x = ad.tensor(rng.standard_normal((6, 3)))
    w1 = ad.parameter(rng.standard_normal((3, 5)) * 0.7)
    w2 = ad.parameter(rng.standard_normal((5, 4)) * 0.7)
    w3 = ad.parameter(rng.standard_normal((4, 2)) * 0.7)
    y = np.zeros((6, 2))
    y[np.arange(6), rng.integers(0, 2, 6)] = 1.0

    def f():
        h1 = ad.tanh(ad.matmul(x, w1))
        h2 = ad.relu(ad.matmul(h1, w2))
        return ad.cross_entropy(ad.softmax_rows(ad.matmul(h2, w3)), y)

    assert ad.grad_check(f, [w1, w2, w3], h=1e-5) < 1e-4


def test_grad_check_quadratic_exact():
    w = ad.parameter(np.array([[1.5, -2.0]]))

    def f():
        return ad.sum_all(ad.mul(w, w))

    assert ad.grad_check(f, [w], h=1e-5) < 1e-9


def test_grad_check_constant_function_zero():
    w = ad.parameter(np.array([[1.0]]))
    c = ad.tensor(np.array([[4.0]]))

    def f():
        return ad.sum_all(c)

    ad.zero_grad([w])
    loss = f()
    ad.backward(loss)
    assert w.grad is None  # constant loss never reaches w


@pytest.mark.parametrize(
    "name,builder",
    [
        ("sigmoid", lambda t: ad.sigmoid(t)),
        ("softplus", lambda t: ad.softplus(t)),
        ("neg_softplus_sym", lambda t: ad.neg_softplus_sym(t)),
        ("tanh", lambda t: ad.tanh(t)),
        ("log", lambda t: ad.log(ad.add(ad.mul(t, t), ad.tensor(np.full(t.shape, 0.5))))),
        ("exp", lambda t: ad.exp(t)),
        ("rowsum", lambda t: ad.rowsum(t)),
        ("transpose", lambda t: ad.transpose(t)),
        ("softmax", lambda t: ad.softmax_rows(t)),
        ("permute", lambda t: ad.permute_rows(t, [2, 0, 3, 1])),
        ("take", lambda t: ad.take_rows(t, [0, 2, 2, 3, 1])),
        ("slice", lambda t: ad.slice_cols(t, 1, 3)),
    ],
)
def test_grad_check_elementwise_ops(name, builder):
    rng = np.random.default_rng(abs(hash(name)) % 2**32)
    w = ad.parameter(rng.standard_normal((4, 3)))
    probe = ad.tensor(rng.standard_normal(builder(ad.tensor(w.data)).shape))

    def f():
        return ad.mean_all(ad.mul(builder(w), probe))

    assert ad.grad_check(f, [w], h=1e-6) < 1e-4


def test_grad_check_segment_ops():
    rng = np.random.default_rng(3)
    seg = ad.Segments([3, 1, 4, 2])
    w = ad.parameter(rng.standard_normal((10, 2)))
    probe = ad.tensor(rng.standard_normal((10, 2)))

    def f():
        return ad.mean_all(ad.mul(ad.segment_softmax(w, seg), probe))

    assert ad.grad_check(f, [w], h=1e-6) < 1e-4


def test_segment_softmax_matches_per_block():
    rng = np.random.default_rng(4)
    seg = ad.Segments([2, 5, 3])
    x = rng.standard_normal((10, 4))
    out = ad.segment_softmax(ad.tensor(x), seg).data
    start = 0
    for n in (2, 5, 3):
        block = x[start : start + n]
        expected = np.exp(block - block.max(axis=0)) / np.exp(block - block.max(axis=0)).sum(axis=0)
        assert np.allclose(out[start : start + n], expected, atol=1e-12)
        start += n


def test_spmm_matches_dense():
    from scipy import sparse

    rng = np.random.default_rng(5)
    dense = (rng.random((6, 6)) < 0.4) * rng.standard_normal((6, 6))
    a = ad.SparseConst(sparse.csr_matrix(dense))
    w = ad.parameter(rng.standard_normal((6, 3)))
    probe = ad.tensor(rng.standard_normal((6, 3)))

    assert np.allclose(ad.spmm(a, w).data, dense @ w.data, atol=1e-12)

    def f():
        return ad.mean_all(ad.mul(ad.spmm(a, w), probe))

    assert ad.grad_check(f, [w], h=1e-6) < 1e-4


def test_concat_and_reshape_grads():
    rng = np.random.default_rng(6)
    a = ad.parameter(rng.standard_normal((2, 3)))
    b = ad.parameter(rng.standard_normal((4, 3)))
    probe = ad.tensor(rng.standard_normal((1, 18)))

    def f():
        flat = ad.reshape(ad.concat_rows([a, b]), (1, 18))
        return ad.mean_all(ad.mul(flat, probe))

    assert ad.grad_check(f, [a, b], h=1e-6) < 1e-4


def test_dropout_identity_when_not_training():
    x = ad.tensor(np.ones((5, 5)))
    assert ad.dropout(x, 0.5, training=False) is x
    assert ad.dropout(x, 0.0, training=True, rng=np.random.default_rng(0)) is x


def test_dropout_seeded_and_scaled():
    x = ad.tensor(np.ones((200, 50)))
    out1 = ad.dropout(x, 0.3, training=True, rng=np.random.default_rng(9))
    out2 = ad.dropout(x, 0.3, training=True, rng=np.random.default_rng(9))
    assert np.array_equal(out1.data, out2.data)
    kept = out1.data != 0.0
    assert np.allclose(out1.data[kept], 1.0 / 0.7)
    assert abs(kept.mean() - 0.7) < 0.02


def test_float32_inputs_stay_float32():
    x = ad.tensor(np.ones((2, 2), dtype=np.float32))
    w = ad.parameter(np.ones((2, 2), dtype=np.float32))
    out = ad.relu(ad.matmul(x, w))
    assert out.data.dtype == np.float32


def test_adam_zero_grads_keep_params():
    p = ad.parameter(np.array([[1.0, 2.0]]))
    p.grad = np.zeros((1, 2))
    state = AdamState(lr=0.5)
    adam_step([("p", p)], state)
    assert np.array_equal(p.data, [[1.0, 2.0]])


def test_adam_first_step_moves_by_lr():
    p = ad.parameter(np.array([[1.0]]))
    p.grad = np.array([[1.0]])
    adam_step([("p", p)], AdamState(lr=0.01))
    # bias-corrected m/sqrt(v) is exactly 1 on the first step
    assert p.data[0, 0] == pytest.approx(1.0 - 0.01, abs=1e-9)


def test_adam_deterministic():
    def run():
        p = ad.parameter(np.array([[1.0, -2.0]]))
        state = AdamState(lr=0.05)
        for step in range(5):
            p.grad = np.array([[0.3, -0.1]]) * (step + 1)
            adam_step([("p", p)], state)
        return p.data.copy()

    assert np.array_equal(run(), run())
