import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cipl.numerics import ShapeError, Tensor, ops
from cipl.numerics.gradcheck import check
from cipl.objectives import (LossWeights, ce_multilabel, cluster_loss, common_labels, cross_loss, gram,
                             interp_align_loss, pred_align_loss, pred_kl_loss, separation_loss,
                             total_loss)
from cipl.proto_head import BinaryPrediction, PrototypeBank, classify, init_last_layer, similarity_maps


def T(a):
    return Tensor(np.asarray(a, dtype=np.float64))


def probs_pred(p):
    p = np.asarray(p, dtype=np.float64)
    return BinaryPrediction(None, T(np.stack([p, 1 - p], axis=-1)))


def make_bank(r, c=2, m=2, d=3):
    n = m * (c + 1)
    return PrototypeBank(T(r.random((n, d))), np.repeat(np.arange(c + 1), m), np.full((n, 3), -1))


# ---------------------------------------------------------------- ce
def test_ce_confident_is_near_zero():
    assert ce_multilabel(probs_pred([[1 - 1e-7, 1e-7]]), [[1, 0]]).values < 1e-6


def test_ce_uniform_is_ln2():
    assert ce_multilabel(probs_pred([[0.5, 0.5, 0.5]]), [[1, 0, 1]]).values == pytest.approx(np.log(2))


@given(st.integers(0, 2**31 - 1))
def test_ce_class_permutation_invariant(seed):
    r = np.random.default_rng(seed)
    p, y = r.uniform(0.01, 0.99, (3, 4)), r.integers(0, 2, (3, 4))
    perm = r.permutation(4)
    a = ce_multilabel(probs_pred(p), y).values
    b = ce_multilabel(probs_pred(p[:, perm]), y[:, perm]).values
    assert a == pytest.approx(b, rel=1e-12) and a >= 0


# ---------------------------------------------------------------- cluster / separation
def single(f, p, c_of):
    bank = PrototypeBank(T(p), np.asarray(c_of), np.full((len(p), 3), -1))
    return T(np.asarray(f, dtype=np.float64).reshape(1, 1, 1, -1)), bank


def test_cluster_zero_on_exact_patch():
    f, bank = single([0.2, 0.3], [[0.2, 0.3], [0.9, 0.9]], [0, 1])
    assert cluster_loss(f, bank, [[1]]).values == 0.0


def test_cluster_hand_value():
    f, bank = single([1.0, 1.0], [[0.0, 0.0], [5.0, 5.0]], [0, 1])
    assert cluster_loss(f, bank, [[1]]).values == pytest.approx(2.0)


def test_cluster_farther_prototype_never_increases():
    f, bank = single([0.5, 0.5], [[0.0, 0.0], [7.0, 7.0]], [0, 1])
    f2, bank2 = single([0.5, 0.5], [[0.0, 0.0], [9.0, 9.0], [7.0, 7.0]], [0, 0, 1])
    assert cluster_loss(f2, bank2, [[1]]).values <= cluster_loss(f, bank, [[1]]).values


def test_all_negative_sample_owns_no_findings():
    f, bank = single([1.0, 1.0], [[5.0, 5.0], [1.0, 1.0]], [0, 1])
    assert cluster_loss(f, bank, [[0]]).values == 0.0


def test_separation_cases():
    f, bank = single([0.0, 0.0], [[0.0, 0.0], [0.0, 0.0]], [0, 1])
    assert separation_loss(f, bank, [[1]], 2.0).values == pytest.approx(2.0)
    f, bank = single([0.0, 0.0], [[0.0, 0.0], [1.0, 1.0]], [0, 1])
    assert separation_loss(f, bank, [[1]], 2.0).values == 0.0


@given(st.floats(0.0, 3.0))
def test_separation_non_increasing(dist):
    vals = []
    for d in (dist, dist + 0.1):
        f, bank = single([0.0], [[0.0], [np.sqrt(d)]], [0, 1])
        vals.append(float(separation_loss(f, bank, [[1]], 2.0).values))
    assert vals[1] <= vals[0] and min(vals) >= 0


# ---------------------------------------------------------------- cross
def test_common_labels_worked_example():
    # classes: mass, edema, nodule
    assert common_labels([[1, 1, 0]], [[1, 0, 1]]).tolist() == [[1, 0, 0]]


def test_cross_reduces_to_ce_sum_when_identical(rng):
    bank = make_bank(rng)
    w = init_last_layer(bank, np.float64)
    fa, fb = T(rng.random((2, 2, 2, 3))), T(rng.random((2, 2, 2, 3)))
    y = np.array([[1, 0], [1, 1]])
    got = cross_loss(fa, fb, y, y, bank, w).values
    ref = sum(ce_multilabel(classify(similarity_maps(f, bank).scores, w), y).values for f in (fa, fb))
    assert got == pytest.approx(ref, rel=1e-12)


@given(st.integers(0, 2**31 - 1))
def test_cross_non_negative(seed):
    r = np.random.default_rng(seed)
    bank = make_bank(r)
    w = T(r.normal(size=(6, 3)))
    y_a, y_b = r.integers(0, 2, (2, 2)), r.integers(0, 2, (2, 2))
    assert cross_loss(T(r.random((2, 2, 2, 3))), T(r.random((2, 2, 2, 3))), y_a, y_b, bank, w).values >= 0


# ---------------------------------------------------------------- interp align
def test_interp_align_cases(rng):
    s = rng.random((2, 3, 3, 4)) + 0.01
    assert interp_align_loss(T(s), T(s)).values == pytest.approx(-1.0)
    assert interp_align_loss(T(s), T(2 * s)).values == pytest.approx(-1.0)
    u = np.zeros((1, 1, 2, 2))
    v = np.zeros((1, 1, 2, 2))
    u[..., 0], v[..., 1] = 1.0, 1.0
    assert interp_align_loss(T(u), T(v)).values == 0.0
    with pytest.raises(ShapeError):
        interp_align_loss(T(s), T(s[:1]))


@given(st.integers(0, 2**31 - 1))
def test_interp_align_bounds(seed):
    r = np.random.default_rng(seed)
    v = interp_align_loss(T(r.normal(size=(2, 2, 2, 3))), T(r.normal(size=(2, 2, 2, 3)))).values
    assert -1 - 1e-12 <= v <= 1 + 1e-12


# ---------------------------------------------------------------- pred align
def test_gram_hand_matmul():
    probs = T(np.array([[[1.0, 0.0]], [[0.0, 1.0]]]))  # B=2, C=1
    assert np.array_equal(gram(probs).values[0], np.eye(2))


@given(st.integers(0, 2**31 - 1))
def test_gram_matches_bruteforce(seed):
    r = np.random.default_rng(seed)
    p = r.random((4, 3, 2))
    g = gram(T(p)).values
    for c in range(3):
        for i in range(4):
            for j in range(4):
                assert g[c, i, j] == pytest.approx(p[i, c] @ p[j, c], rel=1e-12)


@given(st.integers(0, 2**31 - 1))
def test_pred_align_zero_and_permutation(seed):
    r = np.random.default_rng(seed)
    p, q = r.random((5, 3, 2)), r.random((5, 3, 2))
    assert pred_align_loss(T(p), T(p)).values == 0.0
    perm = r.permutation(5)
    a = pred_align_loss(T(p), T(q)).values
    assert pred_align_loss(T(p[perm]), T(q[perm])).values == pytest.approx(a, rel=1e-12)
    brute = sum(np.sum((p[:, c] @ p[:, c].T - q[:, c] @ q[:, c].T) ** 2) for c in range(3)) / (3 * 25)
    assert a == pytest.approx(brute, rel=1e-12) and a >= 0


def test_pred_align_batch_mismatch():
    with pytest.raises(ShapeError):
        pred_align_loss(T(np.ones((2, 1, 2))), T(np.ones((3, 1, 2))))


def test_pred_kl_zero_on_identical(rng):
    p = rng.uniform(0.05, 0.95, (3, 2))
    pp = np.stack([p, 1 - p], -1)
    assert abs(pred_kl_loss(T(pp), T(pp)).values) < 1e-12


# ---------------------------------------------------------------- total
def test_total_loss_reductions():
    one = T(1.0)
    zero = T(0.0)
    w0 = LossWeights(alpha2=0, alpha3=0, alpha4=0)
    assert total_loss(T(3.0), one, one, one, w0).values == 3.0
    assert total_loss(zero, zero, zero, one, LossWeights()).values == 0.5
    assert total_loss(T(3.0), one, one, one, LossWeights(), warmup=True).values == 3.0
    assert total_loss(T(3.0), None, None, one).values == 3.5


def test_reference_weights_are_defaults():
    w = LossWeights()
    assert (w.alpha1, w.alpha2, w.alpha3, w.alpha4, w.tau) == (0.02, 0.5, 0.5, 0.5, 2.0)
    with pytest.raises(ValueError):
        LossWeights(alpha3=-1)


# ---------------------------------------------------------------- gradients
def _head(r):
    bank = make_bank(r)
    return bank, r.normal(size=(6, 3))


def _loss_fns(r):
    bank, _ = _head(r)
    y = np.array([[1, 0], [0, 0]])
    y_b = np.array([[1, 1], [1, 0]])
    sb = r.random((2, 2, 2, 6))
    pb = r.uniform(0.1, 0.9, (2, 2))
    pb = np.stack([pb, 1 - pb], axis=-1)

    def with_bank(fn):
        def wrapped(f, p, w):
            bk = PrototypeBank(p, bank.class_of, bank.source)
            return fn(f, bk, w)
        return wrapped

    def pred_of(f, bk, w):
        return classify(similarity_maps(f, bk).scores, w)

    return {
        "ce": with_bank(lambda f, bk, w: ce_multilabel(pred_of(f, bk, w), y)),
        "cluster": with_bank(lambda f, bk, w: ops.mul(cluster_loss(f, bk, y), ops.sum(w))),
        "separation": with_bank(lambda f, bk, w: ops.add(separation_loss(f, bk, y, 2.0), ops.sum(w))),
        "cross": with_bank(lambda f, bk, w: cross_loss(f, ops.scale(f, 0.9), y, y_b, bk, w)),
        "inte": with_bank(lambda f, bk, w: interp_align_loss(similarity_maps(f, bk).maps, T(sb))),
        "pred": with_bank(lambda f, bk, w: pred_align_loss(pred_of(f, bk, w).binary_probs, T(pb))),
        "pred_kl": with_bank(lambda f, bk, w: pred_kl_loss(pred_of(f, bk, w).binary_probs, T(pb))),
    }


NAMES = ["ce", "cluster", "separation", "cross", "inte", "pred", "pred_kl"]


@pytest.mark.parametrize("name", NAMES)
@pytest.mark.parametrize("seed", range(5))
def test_loss_grad_features_prototypes_last_layer(name, seed):
    r = np.random.default_rng(seed)
    fn = _loss_fns(r)[name]
    bank, w = _head(r)
    args = [r.random((2, 2, 2, 3)), bank.prototypes.values, w]
    assert check(fn, args) < 1e-6
