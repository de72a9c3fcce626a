import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semgraph.graph import Graph
from semgraph.model import (
    FIXED,
    ModelMatrices,
    ParameterSpec,
    SlotMatrix,
    build_sigma,
    default_start,
    duplication_matrix,
    unvech,
    vec,
    vech,
)
from semgraph.objectives import f_ml

from oracles import fd_gradient, max_rel_error

NAN = np.nan


def sigma_of(spec, theta):
    g = Graph(spec.theta_dim)
    s = g.build_node("sum-all", (build_sigma(g, spec),))
    g.set_output(s)
    return g.forward(theta).values[s - 1]


class TestVech:
    def test_small(self):
        assert list(vech([[1, 2], [2, 3]])) == [1, 2, 3]

    def test_identity(self):
        assert list(vech(np.eye(3))) == [1, 0, 0, 1, 0, 1]

    def test_non_square(self):
        with pytest.raises(ValueError):
            vech(np.ones((2, 3)))

    def test_column_major_order(self):
        a = np.array([[11, 0, 0], [21, 22, 0], [31, 32, 33]])
        assert list(vech(a)) == [11, 21, 31, 22, 32, 33]

    def test_unvech_roundtrip(self, rng):
        a = rng.normal(size=(4, 4))
        a = a + a.T
        np.testing.assert_array_equal(unvech(vech(a), 4), a)


class TestDuplication:
    def test_p1(self):
        np.testing.assert_array_equal(duplication_matrix(1), [[1.0]])

    def test_p2(self):
        np.testing.assert_array_equal(duplication_matrix(2), [[1, 0, 0], [0, 1, 0], [0, 1, 0], [0, 0, 1]])

    @pytest.mark.parametrize("p", [3, 4, 5])
    def test_roundtrip(self, p, rng):
        a = rng.normal(size=(p, p))
        a = a + a.T
        np.testing.assert_allclose(duplication_matrix(p) @ vech(a), vec(a), atol=0)

    def test_p4_transpose_weights(self, rng):
        # D^T vec(A) doubles the off-diagonal entries of vech(A)
        a = rng.normal(size=(4, 4))
        a = a + a.T
        weights = vech(2 - np.eye(4))
        np.testing.assert_allclose(duplication_matrix(4).T @ vec(a), weights * vech(a))

    def test_invalid(self):
        with pytest.raises(ValueError):
            duplication_matrix(0)


class TestSpecValidation:
    def test_b0_diagonal_must_be_fixed_zero(self):
        with pytest.raises(ValueError):
            ParameterSpec.from_patterns(np.eye(2), np.eye(2), [[NAN, 0], [0, 0]], np.zeros((2, 2)))
        with pytest.raises(ValueError):
            ParameterSpec.from_patterns(np.eye(2), np.eye(2), [[0.3, 0], [0, 0]], np.zeros((2, 2)))

    def test_indices_must_be_contiguous(self):
        lam = SlotMatrix(np.array([[0], [3]]), np.zeros((2, 1)), False)
        fixed = lambda shape, sym: SlotMatrix(np.full(shape, FIXED), np.zeros(shape), sym)
        mats = ModelMatrices(lam, SlotMatrix(np.array([[1]]), np.zeros((1, 1)), True),
                             fixed((1, 1), False), fixed((2, 2), True))
        with pytest.raises(ValueError):
            ParameterSpec(mats, ("a", "b", "c"))

    def test_labels_unique(self):
        with pytest.raises(ValueError):
            ParameterSpec.from_patterns([[NAN], [NAN]], [[1.0]], [[0.0]], np.eye(2), labels=["a", "a"])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ParameterSpec.from_patterns(np.ones((3, 1)), np.eye(2), np.zeros((2, 2)), np.eye(3))


class TestSigma:
    def test_identity_passthrough(self):
        spec = ParameterSpec.from_patterns(np.eye(2), np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)))
        np.testing.assert_array_equal(sigma_of(spec, []), np.eye(2))

    def test_one_factor_by_hand(self):
        spec = ParameterSpec.from_patterns([[1.0], [NAN]], [[NAN]], [[0.0]], [[NAN, 0], [0, NAN]])
        np.testing.assert_allclose(sigma_of(spec, [1.0, 1.0, 1.0, 1.0]), [[2, 1], [1, 2]])

    def test_path_model_latent_block(self):
        # Lambda = I exposes (I - B0)^-1 Psi (I - B0)^-T directly
        spec = ParameterSpec.from_patterns(np.eye(2), [[NAN, 0], [0, NAN]], [[0, 0], [NAN, 0]], np.zeros((2, 2)))
        np.testing.assert_allclose(sigma_of(spec, [1.0, 1.0, 0.5]), [[1, 0.5], [0.5, 1.25]], atol=1e-15)

    def test_graph_matches_numpy(self, two_factor):
        model, truth = two_factor
        np.testing.assert_allclose(sigma_of(model.spec, truth), model.spec.implied_cov(truth), atol=1e-13)

    def test_theta_dim_mismatch(self, one_factor):
        with pytest.raises(ValueError):
            build_sigma(Graph(3), one_factor[0].spec)

    def test_structurally_singular_b_fails_at_evaluation(self):
        spec = ParameterSpec.from_patterns(np.eye(2), np.eye(2), [[0, NAN], [1.0, 0]], np.eye(2))
        g = Graph(1)
        g.set_output(f_ml(g, build_sigma(g, spec), np.eye(2)))
        assert np.isfinite(g.value([0.5]))
        with pytest.raises(ArithmeticError):
            g.value([1.0])


class TestDefaultStart:
    def test_one_factor_rule(self):
        spec = ParameterSpec.from_patterns(
            [[1.0], [NAN], [NAN]], [[NAN]], [[0.0]], np.diag([NAN] * 3)
        )
        theta0 = default_start(spec, 2 * np.eye(3))
        # lambda2, lambda3, psi, theta11..33
        np.testing.assert_allclose(theta0, [1, 1, 0.1, 1, 1, 1])

    def test_unit_variance_latent_without_marker(self):
        spec = ParameterSpec.from_patterns([[NAN], [NAN]], [[NAN]], [[0.0]], np.diag([NAN] * 2))
        assert default_start(spec, np.eye(2))[2] == 1.0

    def test_saturated(self, rng):
        a = rng.normal(size=(3, 3))
        S = a @ a.T + np.eye(3)
        spec = ParameterSpec.from_patterns(np.eye(3), np.zeros((3, 3)), np.zeros((3, 3)), np.full((3, 3), NAN))
        theta0 = default_start(spec, S)
        np.testing.assert_allclose(spec.implied_cov(theta0), np.diag(0.5 * np.diag(S)))


@st.composite
def random_specs(draw):
    p = draw(st.integers(1, 6))
    m = draw(st.integers(1, 3))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    lam = np.where(rng.random((p, m)) < 0.5, NAN, rng.choice([0.0, 1.0], size=(p, m)))
    psi = np.where(rng.random((m, m)) < 0.3, NAN, 0.0)
    np.fill_diagonal(psi, NAN)
    b0 = np.where(np.tril(rng.random((m, m)) < 0.5, -1), NAN, 0.0)
    th = np.diag(np.where(rng.random(p) < 0.8, NAN, 1.0))
    spec = ParameterSpec.from_patterns(lam, psi, b0, th)
    a = rng.normal(size=(p, p))
    S = a @ a.T + p * np.eye(p)
    return spec, S, rng


@settings(max_examples=60, deadline=None)
@given(random_specs())
def test_default_start_is_pd(case):
    spec, S, _ = case
    np.linalg.cholesky(spec.implied_cov(default_start(spec, S)))


@settings(max_examples=60, deadline=None)
@given(random_specs())
def test_sigma_symmetric_and_matches_oracle(case):
    spec, _, rng = case
    theta = rng.uniform(-1, 1, size=spec.theta_dim)
    sigma = sigma_of(spec, theta)
    assert np.max(np.abs(sigma - sigma.T)) < 1e-12
    m = spec.assemble(theta)
    binv = np.linalg.inv(np.eye(spec.n_latent) - m["b0"])
    oracle = m["lambda"] @ binv @ m["psi"] @ binv.T @ m["lambda"].T + m["theta"]
    np.testing.assert_allclose(sigma, oracle, atol=1e-12 * max(1.0, np.abs(oracle).max()))


@settings(max_examples=40, deadline=None)
@given(random_specs())
def test_no_structural_part_is_plain_product(case):
    spec, _, rng = case
    b0 = spec.matrices.b0
    if np.any(b0.index >= 0):
        spec = ParameterSpec.from_patterns(
            *_patterns_without_b0(spec)
        )
    theta = rng.uniform(-1, 1, size=spec.theta_dim)
    m = spec.assemble(theta)
    oracle = m["lambda"] @ m["psi"] @ m["lambda"].T + m["theta"]
    np.testing.assert_allclose(sigma_of(spec, theta), oracle, atol=1e-12 * max(1.0, np.abs(oracle).max()))


def _patterns_without_b0(spec):
    out = []
    for name in ("lambda", "psi", "b0", "theta"):
        sm = spec.matrices[name]
        pat = np.where(sm.index >= 0, NAN, sm.fixed)
        if name == "b0":
            pat = np.zeros(pat.shape)
        out.append(pat)
    return out


def test_equality_constraints_share_values(rng):
    # loadings 2 and 3 share one parameter; residual variances share another
    lam = SlotMatrix(np.array([[FIXED], [0], [0]]), np.array([[1.0], [0], [0]]), False)
    psi = SlotMatrix(np.array([[1]]), np.zeros((1, 1)), True)
    b0 = SlotMatrix(np.full((1, 1), FIXED), np.zeros((1, 1)), False)
    th = SlotMatrix(np.where(np.eye(3) > 0, 2, FIXED), np.zeros((3, 3)), True)
    spec = ParameterSpec(ModelMatrices(lam, psi, b0, th), ("l", "v", "e"))
    for _ in range(10):
        theta = rng.uniform(0.1, 2, size=3)
        m = spec.assemble(theta)
        assert m["lambda"][1, 0] == m["lambda"][2, 0]
        assert len(set(np.diag(m["theta"]))) == 1
    assert spec.locations()[0] == ("lambda", 1, 0)


def test_gradient_through_sigma(two_factor, rng):
    model, truth = two_factor
    S = model.spec.implied_cov(truth) + 0.05 * np.eye(6)
    g = Graph(model.spec.theta_dim)
    g.set_output(f_ml(g, build_sigma(g, model.spec), S))
    theta = truth + rng.uniform(-0.1, 0.1, size=truth.size)
    assert max_rel_error(g.gradient(theta), fd_gradient(g.value, theta)) < 1e-6
