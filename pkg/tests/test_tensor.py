import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roughkit.path import SampledPath, signature
from roughkit.tensor import (
    DimensionMismatchError,
    GroupElement,
    TruncatedTensor,
    homogeneous_norm,
    last_letter_split,
    split_apply,
    split_matrix,
    tensor_exp,
    tensor_log,
)

from oracles import rebracket_product_rhs


def basis(i, dim, level):
    v = np.zeros(dim)
    v[i] = 1.0
    return TruncatedTensor.from_vector(v, level)


def random_signature(rng, dim=3, level=4, n_pts=6) -> GroupElement:
    t = np.sort(rng.uniform(0.0, 1.0, n_pts))
    t[0], t[-1] = 0.0, 1.0
    pts = 0.6 * rng.standard_normal((n_pts, dim))
    return signature(SampledPath(t, pts), level).points[-1]


def random_tensor(rng, dim, level, from_level=0) -> TruncatedTensor:
    return TruncatedTensor.from_level_blocks(
        dim,
        level,
        {k: rng.standard_normal(dim**k) for k in range(from_level, level + 1)},
    )


def test_product_of_one_plus_basis_vectors():
    one = TruncatedTensor.unit(2, 2)
    e1 = basis(0, 2, 2)
    e2 = basis(1, 2, 2)
    prod = (one + e1) @ (one + e2)
    assert prod.scalar == 1.0
    np.testing.assert_allclose(prod.level_block(1), [1.0, 1.0])
    np.testing.assert_allclose(
        prod.level_block(2), [0.0, 1.0, 0.0, 0.0], atol=0.0
    )


def test_multiplication_by_unit_is_identity():
    rng = np.random.default_rng(0)
    for _ in range(10):
        a = random_tensor(rng, dim=3, level=3)
        one = TruncatedTensor.unit(3, 3)
        assert (a @ one).is_close(a)
        assert (one @ a).is_close(a)


def test_commuting_exponentials_add():
    e1 = basis(0, 2, 3)
    prod = tensor_exp(e1) @ tensor_exp(e1)
    double = tensor_exp(e1 * 2.0)
    for k in range(4):
        np.testing.assert_allclose(
            prod.level_block(k), double.level_block(k), atol=1e-14
        )


def test_exp_of_zero_is_unit():
    z = TruncatedTensor.zero(2, 2)
    assert tensor_exp(z).tensor.is_close(TruncatedTensor.unit(2, 2))


def test_log_exp_round_trip():
    v = basis(0, 2, 3) + basis(1, 2, 3)
    back = tensor_log(tensor_exp(v))
    for k in range(4):
        np.testing.assert_allclose(
            back.level_block(k), v.level_block(k), atol=1e-14
        )


def test_exp_series_truncation():
    a = tensor_exp(basis(0, 2, 2))
    assert a.tensor.scalar == 1.0
    np.testing.assert_allclose(a.level_block(1), [1.0, 0.0])
    np.testing.assert_allclose(a.level_block(2), [0.5, 0.0, 0.0, 0.0])


def test_inverse_of_unit():
    one = GroupElement(TruncatedTensor.unit(2, 2))
    assert one.inverse().tensor.is_close(one.tensor)


def test_inverse_of_exponential_negates():
    rng = np.random.default_rng(1)
    v = random_tensor(rng, dim=2, level=3, from_level=1)
    inv = tensor_exp(v).inverse()
    neg = tensor_exp(-v)
    for k in range(4):
        np.testing.assert_allclose(
            inv.level_block(k), neg.level_block(k), atol=1e-13
        )


def test_inverse_cancels_on_random_signatures():
    rng = np.random.default_rng(2)
    one = TruncatedTensor.unit(3, 4)
    for _ in range(100):
        a = random_signature(rng)
        prod = (a @ a.inverse()).tensor
        assert (prod - one).norm() <= 1e-12


def test_homogeneous_norm_of_unit_is_zero():
    assert homogeneous_norm(GroupElement(TruncatedTensor.unit(2, 2))) == 0.0


def test_homogeneous_norm_of_segment_exponential():
    val = homogeneous_norm(tensor_exp(basis(0, 2, 2)))
    assert val == pytest.approx(1.0 + 0.5**0.5, abs=1e-14)


def test_homogeneous_norm_dilation_homogeneity():
    rng = np.random.default_rng(3)
    for lam in (0.3, 2.0, 4.0):
        a = random_signature(rng)
        assert homogeneous_norm(a.dilate(lam)) == pytest.approx(
            lam * homogeneous_norm(a), rel=1e-12
        )


@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_associativity(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 4))
    level = int(rng.integers(2, 5))
    a, b, c = (random_tensor(rng, dim, level) for _ in range(3))
    left = (a @ b) @ c
    right = a @ (b @ c)
    assert (left - right).norm() <= 1e-12 * max(1.0, left.norm())


@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_grading_of_products(seed):
    """pi_k(ab) only sees pi_j(a), pi_{k-j}(b): zeroing levels above k
    changes nothing at level k."""
    rng = np.random.default_rng(seed)
    level = 4
    a, b = (random_tensor(rng, dim=2, level=level) for _ in range(2))
    k = int(rng.integers(1, level + 1))
    full = (a @ b).level_block(k)

    def chop(t):
        return TruncatedTensor.from_level_blocks(
            2, level, {j: t.level_block(j) for j in range(k + 1)}
        )

    np.testing.assert_allclose(
        (chop(a) @ chop(b)).level_block(k), full, atol=1e-13
    )


def test_exp_log_bijection_on_slices():
    rng = np.random.default_rng(4)
    for _ in range(20):
        v = random_tensor(rng, dim=3, level=3, from_level=1)
        assert (tensor_log(tensor_exp(v)) - v).norm() <= 1e-13
        a = random_signature(rng, dim=3, level=3)
        redone = tensor_exp(tensor_log(a)).tensor
        assert (redone - a.tensor).norm() <= 1e-13


def test_norm_submultiplicative_up_to_pinned_constant():
    """The per-level Euclidean norms are admissible only up to a
    combinatorial constant; 4.1 covers every level pair at L = 4."""
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        a, b = (random_tensor(rng, dim=2, level=4) for _ in range(2))
        worst = max(worst, (a @ b).norm() / (a.norm() * b.norm()))
    assert worst <= 4.1


def test_dimension_mismatch_rejected():
    a = TruncatedTensor.unit(2, 2)
    b = TruncatedTensor.unit(3, 2)
    with pytest.raises(DimensionMismatchError):
        a @ b
    with pytest.raises(DimensionMismatchError):
        a + TruncatedTensor.unit(2, 3)


# -- last-letter rebracketing (the final-integration extractor) --------------


def lls_blocks(g: GroupElement) -> dict:
    arrs = last_letter_split(g.tensor)
    return {k: arrs[k - 1] for k in range(1, g.level)}


def test_rebracket_of_unit_vanishes():
    one = GroupElement(TruncatedTensor.unit(3, 3))
    for block in last_letter_split(one.tensor):
        np.testing.assert_array_equal(block, np.zeros_like(block))


def test_rebracket_of_segment_matches_quadrature():
    """On exp(e1) the rebracketed level-2 block is int_0^1 u du e1 (x) e1."""
    a = tensor_exp(basis(0, 2, 2))
    u = np.linspace(0.0, 1.0, 20001)
    quad = np.trapezoid(u, u)
    block = last_letter_split(a.tensor)[0]
    np.testing.assert_allclose(block, [[quad, 0.0], [0.0, 0.0]], atol=1e-9)


def test_rebracket_product_identity_on_signatures():
    rng = np.random.default_rng(6)
    for _ in range(20):
        a = random_signature(rng, dim=2, level=4)
        b = random_signature(rng, dim=2, level=4)
        lhs = lls_blocks(a @ b)
        rhs = rebracket_product_rhs(
            [a.level_block(k) for k in range(5)],
            lls_blocks(a),
            lls_blocks(b),
            b.level_block(1),
        )
        for k in lhs:
            np.testing.assert_allclose(lhs[k], rhs[k], atol=1e-10)


# -- composition splits -------------------------------------------------------


def test_split_reproduces_level_products_on_grouplikes():
    rng = np.random.default_rng(7)
    for parts in [(1, 1), (2, 1), (1, 2), (1, 1, 1), (2, 2)]:
        a = random_signature(rng, dim=2, level=4)
        K = sum(parts)
        image = split_apply(parts, a.level_block(K), dim=2)
        expected = a.level_block(parts[0])
        for k in parts[1:]:
            expected = np.kron(expected, a.level_block(k))
        np.testing.assert_allclose(image, expected, atol=1e-10)


def test_split_linearity_and_shapes():
    m = split_matrix(2, (2, 1))
    assert m.shape == (8, 8)
    rng = np.random.default_rng(8)
    x, y = rng.standard_normal((2, 8))
    np.testing.assert_allclose(
        split_apply((2, 1), x + 3.0 * y, dim=2),
        split_apply((2, 1), x, dim=2) + 3.0 * split_apply((2, 1), y, dim=2),
        atol=1e-13,
    )


def test_split_rejects_wrong_block_size():
    with pytest.raises(DimensionMismatchError):
        split_apply((2, 1), np.zeros(4), dim=2)
