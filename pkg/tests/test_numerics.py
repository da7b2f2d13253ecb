import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cipl.numerics import DomainError, Graph, ShapeError, Tensor, ops
from cipl.numerics import _kernels_numpy as knp
from cipl.numerics.gradcheck import check

try:
    from cipl.numerics import _kernels_numba as knb
except ImportError:  # pragma: no cover
    knb = None

SEEDS = range(5)


def T(a):
    return Tensor(np.asarray(a, dtype=np.float64))


# ---------------------------------------------------------------- matmul
def test_matmul_identity(rng):
    b = rng.normal(size=(2, 3))
    assert np.array_equal(ops.matmul(T(np.eye(2)), T(b)).values, b)


def test_matmul_hand_value():
    out = ops.matmul(T([[1, 2], [3, 4]]), T([[1], [1]]))
    assert np.array_equal(out.values, [[3], [7]])


def test_matmul_shape_error_names_dims():
    with pytest.raises(ShapeError, match=r"3.*4|4.*3"):
        ops.matmul(T(np.ones((2, 3))), T(np.ones((4, 2))))


@pytest.mark.parametrize("seed", SEEDS)
def test_matmul_grad(seed):
    r = np.random.default_rng(seed)
    assert check(lambda a, b: ops.sum(ops.matmul(a, b)), [r.normal(size=(3, 3)), r.normal(size=(3, 3))]) < 1e-6


@pytest.mark.parametrize("seed", SEEDS)
def test_batched_matmul_grad(seed):
    r = np.random.default_rng(seed)
    w = r.normal(size=(2, 3, 3))
    assert check(lambda a, b: ops.sum(ops.mul(ops.matmul(a, b), T(w))),
                 [r.normal(size=(2, 3, 4)), r.normal(size=(4, 3))]) < 1e-6


# ---------------------------------------------------------------- conv2d
def test_conv_1x1_ones_is_identity(rng):
    x = rng.normal(size=(5, 5, 1))
    assert np.allclose(ops.conv2d(T(x), T(np.ones((1, 1, 1, 1)))).values, x)


def test_conv_box_kernel_interior():
    v = 0.7
    out = ops.conv2d(T(np.full((5, 5, 1), v)), T(np.ones((3, 3, 1, 1))), pad=1)
    assert out.values[2, 2, 0] == pytest.approx(9 * v)
    assert out.values[0, 0, 0] == pytest.approx(4 * v)


def test_conv_non_integral_extent():
    with pytest.raises(ShapeError):
        ops.conv2d(T(np.ones((6, 6, 1))), T(np.ones((3, 3, 1, 1))), stride=2)


def test_conv_kernel_too_large():
    with pytest.raises(ShapeError):
        ops.conv2d(T(np.ones((2, 2, 1))), T(np.ones((3, 3, 1, 1))))


@pytest.mark.parametrize("seed", SEEDS)
def test_conv_grad(seed):
    r = np.random.default_rng(seed)
    args = [r.normal(size=(5, 5, 2)), r.normal(size=(3, 3, 2, 3)), r.normal(size=3)]
    w = r.normal(size=(5, 5, 3))
    err = check(lambda x, k, b: ops.sum(ops.mul(ops.conv2d(x, k, b, pad=1), T(w))), args)
    assert err < 1e-6


@pytest.mark.parametrize("seed", SEEDS)
def test_conv_strided_batched_grad(seed):
    r = np.random.default_rng(seed)
    w = r.normal(size=(2, 2, 2, 2))
    err = check(lambda x, k: ops.sum(ops.mul(ops.conv2d(x, k, stride=2), T(w))),
                [r.normal(size=(2, 5, 5, 1)), r.normal(size=(3, 3, 1, 2))])
    assert err < 1e-6


@pytest.mark.parametrize("seed", SEEDS)
def test_maxpool_grad(seed):
    r = np.random.default_rng(seed)
    w = r.normal(size=(2, 2, 2))
    assert check(lambda x: ops.sum(ops.mul(ops.maxpool2d(x), T(w))), [r.normal(size=(4, 4, 2))]) < 1e-6


# ---------------------------------------------------------------- softmax_cols
def test_softmax_cols_hand_values():
    assert np.allclose(ops.softmax_cols(T([[0.0], [0.0]])).values, [[0.5], [0.5]])
    assert np.allclose(ops.softmax_cols(T([[np.log(1)], [np.log(3)]])).values, [[0.25], [0.75]],
                       atol=1e-15)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_softmax_cols_columns_sum_to_one(m, n, seed):
    a = np.random.default_rng(seed).normal(scale=20, size=(m, n))
    w = ops.softmax_cols(T(a)).values
    assert np.allclose(w.sum(axis=0), 1.0, atol=1e-9)
    assert np.all(w > 0) and np.all(w <= 1)


@given(st.integers(0, 2**31 - 1))
def test_softmax_cols_shift_invariance(seed):
    r = np.random.default_rng(seed)
    a = r.normal(size=(4, 3))
    c = r.normal(scale=50, size=(1, 3))
    assert np.allclose(ops.softmax_cols(T(a + c)).values, ops.softmax_cols(T(a)).values, atol=1e-12)


@pytest.mark.parametrize("seed", SEEDS)
def test_softmax_cols_grad(seed):
    r = np.random.default_rng(seed)
    w = r.normal(size=(4, 3))
    assert check(lambda a: ops.sum(ops.mul(ops.softmax_cols(a), T(w))), [r.normal(size=(4, 3))]) < 1e-6


# ---------------------------------------------------------------- reduce_max_spatial
def test_reduce_max_spatial_picks_max():
    s = np.array([[[0.1]], [[0.9]]])  # H=2, W=1, N=1
    scores, pos = ops.reduce_max_spatial(T(s))
    assert scores.values[0] == 0.9 and tuple(pos[0]) == (1, 0)


def test_reduce_max_spatial_tie_rule():
    scores, pos = ops.reduce_max_spatial(T(np.full((3, 3, 2), 0.4)))
    assert np.all(scores.values == 0.4) and np.all(pos == 0)


def test_reduce_max_spatial_grad_routes_to_argmax(rng):
    s = Tensor(rng.random((3, 4, 2)), requires_grad=True)
    with Graph() as g:
        scores, pos = ops.reduce_max_spatial(s)
        g.backward(ops.sum(scores))
    for n in range(2):
        i, j = pos[n]
        expect = np.zeros((3, 4))
        expect[i, j] = 1.0
        assert np.array_equal(s.grad[..., n], expect)


@given(st.integers(0, 2**31 - 1))
def test_reduce_max_spatial_row_major_first(seed):
    r = np.random.default_rng(seed)
    s = r.integers(0, 3, size=(3, 3, 2)).astype(float)
    _, pos = ops.reduce_max_spatial(T(s))
    for n in range(2):
        flat = s[..., n].reshape(-1)
        assert tuple(pos[n]) == divmod(int(np.argmax(flat)), 3)


# ---------------------------------------------------------------- elementwise suite
UNARY = {
    "exp": ops.exp,
    "log": lambda a: ops.log(ops.add(ops.square(a), 0.5)),
    "relu": ops.relu,
    "sigmoid": ops.sigmoid,
    "square": ops.square,
    "neg": ops.neg,
    "scale": lambda a: ops.scale(a, -1.7),
    "sum_axis": lambda a: ops.sum(a, axis=1),
    "mean": lambda a: ops.mean(a, axis=0),
    "max": lambda a: ops.max(a, axis=1),
    "min": lambda a: ops.min(a, axis=0),
    "softmax": ops.softmax_cols,
    "transpose": ops.transpose,
    "reshape": lambda a: ops.reshape(a, (4, 3)),
    "getitem": lambda a: a[1:, ::2],
}
BINARY = {
    "add": ops.add,
    "sub": ops.sub,
    "mul": ops.mul,
    "cosine": lambda u, v: ops.cosine(u, v),
    "sqdist": lambda u, v: ops.sqdist(u, ops.reshape(v, (3, 4))),
    "concat": lambda u, v: ops.concat([u, v], axis=0),
}


@pytest.mark.parametrize("name", sorted(UNARY))
@pytest.mark.parametrize("seed", SEEDS)
def test_unary_grad(name, seed):
    r = np.random.default_rng(seed)
    x = r.normal(size=(3, 4))
    x[np.abs(x) < 0.05] = 0.3  # keep relu away from its kink
    out = UNARY[name](T(x))
    w = r.normal(size=out.dims)
    assert check(lambda a: ops.sum(ops.mul(UNARY[name](a), T(w))), [x]) < 1e-6


@pytest.mark.parametrize("name", sorted(BINARY))
@pytest.mark.parametrize("seed", SEEDS)
def test_binary_grad(name, seed):
    r = np.random.default_rng(seed)
    u, v = r.normal(size=(3, 4)), r.normal(size=(3, 4))
    out = BINARY[name](T(u), T(v))
    w = r.normal(size=out.dims)
    assert check(lambda a, b: ops.sum(ops.mul(BINARY[name](a, b), T(w))), [u, v]) < 1e-6


def test_scalar_broadcast_only():
    a = T(np.ones((2, 3)))
    assert np.array_equal(ops.add(a, 2.0).values, np.full((2, 3), 3.0))
    with pytest.raises(ShapeError):
        ops.add(a, T(np.ones(3)))


def test_log_domain_error():
    with pytest.raises(DomainError):
        ops.log(T([1.0, 0.0]))


def test_cosine_cases(rng):
    v = rng.normal(size=5)
    assert ops.cosine(T(v), T(v)).values == pytest.approx(1.0)
    assert ops.cosine(T([1.0, 0.0]), T([0.0, 3.0])).values == 0.0


def test_grad_accumulates_across_backward_calls(rng):
    a = Tensor(rng.normal(size=3), requires_grad=True)
    a.zero_grad()
    for _ in range(2):
        with Graph() as g:
            g.backward(ops.sum(ops.scale(a, 3.0)))
    assert np.array_equal(a.grad, np.full(3, 6.0))


def test_graph_reverse_order():
    a = Tensor(np.ones(2), requires_grad=True)
    with Graph() as g:
        b = ops.exp(a)
        c = ops.square(b)
        d = ops.sum(c)
    assert g.kernels() == ["exp", "square", "sum"]
    order = []
    for node in reversed(g.nodes):
        order.append(node.kernel)
    assert order == ["sum", "square", "exp"]
    g.backward(d)
    assert np.allclose(a.grad, 2 * np.exp(2.0))


# ---------------------------------------------------------------- composed graph
def _composed(x, k, p):
    f = ops.sigmoid(ops.conv2d(x, k, pad=1))
    d = ops.sqdist(ops.reshape(f, (1, 16, 3)), p)
    s = ops.exp(ops.scale(d, -1.0 / 3))
    scores, _ = ops.reduce_max_spatial(ops.reshape(s, (4, 4, 5)))
    return ops.mean(ops.square(scores))


@pytest.mark.parametrize("seed", SEEDS)
def test_composed_grad_64bit(seed):
    r = np.random.default_rng(seed)
    args = [r.random((4, 4, 2)), r.normal(size=(3, 3, 2, 3)), r.random((5, 3))]
    assert check(_composed, args) < 1e-6


@pytest.mark.parametrize("seed", SEEDS)
def test_composed_grad_32bit(seed):
    r = np.random.default_rng(seed)
    args = [r.random((4, 4, 2)), r.normal(size=(3, 3, 2, 3)), r.random((5, 3))]
    assert check(_composed, args, dtype=np.float32) < 1e-4


# ---------------------------------------------------------------- backends
@pytest.mark.skipif(knb is None, reason="numba unavailable")
class TestBackendsAgree:
    def test_im2col_col2im(self, rng):
        xp = rng.normal(size=(2, 6, 6, 3))
        a = knp.im2col(xp, 3, 3, 1, 4, 4)
        b = knb.im2col(xp, 3, 3, 1, 4, 4)
        assert np.allclose(a, b, atol=1e-12)
        back_a = knp.col2im(a, 6, 6, 3, 3, 1)
        back_b = knb.col2im(a, 6, 6, 3, 3, 1)
        assert np.allclose(back_a, back_b, atol=1e-12)

    def test_maxpool(self, rng):
        x = rng.integers(0, 4, size=(2, 4, 6, 3)).astype(float)
        oa, ia = knp.maxpool_forward(x, 2)
        ob, ib = knb.maxpool_forward(x, 2)
        assert np.array_equal(oa, ob) and np.array_equal(ia, ib)
        d = rng.normal(size=oa.shape)
        assert np.array_equal(knp.maxpool_backward(d, ia, 4, 6, 2), knb.maxpool_backward(d, ib, 4, 6, 2))

    def test_sqdist_and_argmax(self, rng):
        a, b = rng.normal(size=(2, 5, 4)), rng.normal(size=(3, 4))
        assert np.allclose(knp.sqdist(a, b), knb.sqdist(a, b), atol=1e-12)
        s = rng.integers(0, 3, size=(2, 9, 4)).astype(float)
        assert np.array_equal(knp.spatial_argmax(s), knb.spatial_argmax(s))

    def test_warp(self, rng):
        img = rng.random((9, 7, 2))
        m = np.array([[0.9, 0.1, 0.4], [-0.2, 1.1, -0.7]])
        assert np.allclose(knp.warp_affine(img, m, 9, 7), knb.warp_affine(img, m, 9, 7), atol=1e-12)


def test_kernel_determinism(rng):
    x = rng.random((2, 8, 8, 1)).astype(np.float32)
    k = rng.normal(size=(3, 3, 1, 4)).astype(np.float32)
    a = ops.conv2d(Tensor(x), Tensor(k), pad=1).values
    b = ops.conv2d(Tensor(x.copy()), Tensor(k.copy()), pad=1).values
    assert a.tobytes() == b.tobytes()
