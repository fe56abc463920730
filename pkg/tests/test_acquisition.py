import numpy as np
import pytest

from nasbo.acquisition import (
    AcquisitionContext,
    FixedOutcomeMember,
    GpMember,
    OptimizerSettings,
    QNehvi,
    SearchSpaceExhausted,
    propose_batch,
    qnehvi_mcmc,
)
from nasbo.gp import GpHyperParams
from nasbo.search_space import ParameterSpec, SearchSpace
from oracles import dense_posterior, hv2d, hvi_brute_force


def fixed(values):
    """Members whose outcome at unit input x is ``values(x)`` with no uncertainty."""
    return [FixedOutcomeMember(lambda X, k=k: np.array([values(x)[k] for x in X])) for k in range(2)]


def gp_problem(seed, n=4, d=2):
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    xc = rng.random((1, d))
    members, post = [], []
    for _ in range(2):
        ls = rng.uniform(0.2, 0.5, d)
        s2, nv = rng.uniform(0.05, 0.15), rng.uniform(1e-4, 1e-2)
        y = rng.uniform(0.4, 0.8, n)
        members.append(GpMember(GpHyperParams(0.6, s2, nv, ls), X, y))
        post.append(dense_posterior(X, y, np.vstack([X, xc]), 0.6, s2, nv, ls))
    return X, xc, members, post


class Wrapped:
    """Forwards to a GP member while hiding its type, forcing the generic path."""

    def __init__(self, m):
        self.m = m

    def predict(self, X):
        return self.m.predict(X)

    def prior_cov(self, A, B):
        return self.m.prior_cov(A, B)

    def prior_var(self, A):
        return self.m.prior_var(A)


def tiny_space(n_values=3):
    return SearchSpace((ParameterSpec("w", "int", "encoder", lo=0, hi=n_values - 1, step=1),))


def test_zero_variance_matches_deterministic_hvi():
    table = {0.0: (0.5, 0.5), 1.0: (0.25, 0.75)}
    members = fixed(lambda x: table[float(x[0])])
    ctx = AcquisitionContext(None, [[0.0]], [[0.5, 0.5]], (1, 1), members=[members])
    want = hv2d([(0.5, 0.5), (0.25, 0.75)], (1, 1)) - hv2d([(0.5, 0.5)], (1, 1))
    assert want == 0.0625
    assert qnehvi_mcmc(ctx, [[1.0]]) == want
    assert QNehvi(ctx).joint_value([[1.0]]) == want


def test_dominated_candidate_has_zero_value():
    members = fixed(lambda x: (0.5, 0.5) if x[0] < 0.5 else (0.6, 0.7))
    ctx = AcquisitionContext(None, [[0.0]], [[0.5, 0.5]], (1, 1), members=[members])
    assert qnehvi_mcmc(ctx, [[1.0]]) == 0.0


def test_pending_point_removes_its_own_improvement():
    members = fixed(lambda x: (0.5, 0.5) if x[0] < 0.5 else (0.3, 0.2))
    ctx = AcquisitionContext(None, [[0.0]], [[0.5, 0.5]], (1, 1), members=[members])
    assert qnehvi_mcmc(ctx, [[1.0]]) > 0
    assert qnehvi_mcmc(ctx.with_pending([[1.0]]), [[1.0]]) == 0.0


def test_value_is_the_mean_over_draws():
    a = fixed(lambda x: (0.5, 0.5) if x[0] < 0.5 else (0.25, 0.75))
    b = fixed(lambda x: (0.5, 0.5) if x[0] < 0.5 else (0.1, 0.1))
    single = [qnehvi_mcmc(AcquisitionContext(None, [[0.0]], [[0.5, 0.5]], (1, 1), members=[m]), [[1.0]]) for m in (a, b)]
    both = qnehvi_mcmc(AcquisitionContext(None, [[0.0]], [[0.5, 0.5]], (1, 1), members=[a, b]), [[1.0]])
    assert both == pytest.approx(np.mean(single), abs=1e-15)


def test_fast_path_matches_generic_path():
    X, _, members, _ = gp_problem(3)
    pend = np.random.default_rng(0).random((2, 2))
    Xc = np.random.default_rng(1).random((50, 2))
    fast = QNehvi(AcquisitionContext(None, X, np.zeros((4, 2)), (1, 1), pending=pend, members=[members], seed=4))
    slow = QNehvi(AcquisitionContext(None, X, np.zeros((4, 2)), (1, 1), pending=pend, members=[[Wrapped(m) for m in members]], seed=4))
    np.testing.assert_allclose(fast.Yo, slow.Yo, atol=1e-12)
    np.testing.assert_allclose(fast(Xc), slow(Xc), atol=1e-12)


def test_cached_boxes_match_cache_free_estimate():
    X, _, members, _ = gp_problem(5)
    acq = QNehvi(AcquisitionContext(None, X, np.zeros((4, 2)), (1, 1), members=[members], seed=2))
    for xc in np.random.default_rng(2).random((10, 1, 2)):
        assert acq(xc)[0] == pytest.approx(acq.joint_value(xc), abs=1e-12)


def test_common_random_numbers():
    X, xc, members, _ = gp_problem(7)
    mk = lambda s: QNehvi(AcquisitionContext(None, X, np.zeros((4, 2)), (1, 1), members=[members], seed=s))
    Xc = np.random.default_rng(3).random((20, 2))
    np.testing.assert_array_equal(mk(1)(Xc), mk(1)(Xc))
    assert not np.array_equal(mk(1)(Xc), mk(2)(Xc))
    # chunking does not change the samples
    np.testing.assert_array_equal(mk(1)(Xc, chunk=3), mk(1)(Xc))
    assert np.all(mk(1)(Xc) >= 0)


def test_matches_brute_force_oracle():
    X, xc, members, post = gp_problem(9)
    want, se = hvi_brute_force(post, (1, 1), 200_000, seed=1)
    got = qnehvi_mcmc(AcquisitionContext(None, X, np.zeros((4, 2)), (1, 1), members=[members], mc_samples=2**15), xc)
    assert abs(got - want) < 4 * se + 0.01 * want


def test_q2_joint_value_at_least_best_single():
    X, _, members, _ = gp_problem(11)
    ctx = AcquisitionContext(None, X, np.zeros((4, 2)), (1, 1), members=[members], mc_samples=4096)
    a, b = np.array([[0.1, 0.9]]), np.array([[0.9, 0.1]])
    pair = qnehvi_mcmc(ctx, np.vstack([a, b]))
    assert pair >= max(qnehvi_mcmc(ctx, a), qnehvi_mcmc(ctx, b)) * 0.97


def test_dimension_errors():
    X, _, members, _ = gp_problem(0)
    ctx = AcquisitionContext(None, X, np.zeros((4, 2)), (1, 1), members=[members])
    with pytest.raises(ValueError):
        qnehvi_mcmc(ctx, [[0.1, 0.2, 0.3]])
    with pytest.raises(ValueError):
        QNehvi(ctx, max_q=1).joint_samples(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        AcquisitionContext(None, X, np.zeros((4, 2)), (1, 1), members=[members], mc_samples=0)
    with pytest.raises(ValueError):
        AcquisitionContext(None, X, np.zeros((4, 2)), (1, 1))


# -- grid optimizer -------------------------------------------------------------------

SMALL = OptimizerSettings(raw_samples=64, n_seeds=3)


def v_shape(x):
    v = abs(float(x[0]) - 0.5) + 0.3
    return (v, v)


def test_picks_the_middle_of_three():
    space = tiny_space(3)
    ctx = AcquisitionContext(None, [[0.0]], [v_shape([0.0])], (1, 1), members=[fixed(v_shape)])
    batch = propose_batch(ctx, space, 1, SMALL)
    assert batch.indices == [(1,)]
    assert batch.acquisition_values[0] == pytest.approx(hv2d([(0.3, 0.3)], (1, 1)) - hv2d([(0.8, 0.8)], (1, 1)))


def test_batch_never_repeats_and_exhausts():
    space = tiny_space(3)
    ctx = AcquisitionContext(None, [[0.0]], [v_shape([0.0])], (1, 1), members=[fixed(v_shape)])
    batch = propose_batch(ctx, space, 2, SMALL)
    assert batch.indices[0] == (1,) and sorted(batch.indices) == [(1,), (2,)]
    assert batch.acquisition_values[1] <= batch.acquisition_values[0]
    with pytest.raises(SearchSpaceExhausted):
        propose_batch(ctx, space, 3, SMALL)
    assert propose_batch(ctx, space, 1, SMALL, exclude=[(1,)]).indices == [(2,)]


def test_batch_on_larger_grid_is_unique_and_deterministic():
    space = SearchSpace(
        (
            ParameterSpec("a", "int", "encoder", lo=0, hi=9, step=1),
            ParameterSpec("b", "int", "encoder", lo=0, hi=9, step=1),
        )
    )
    X, _, members, _ = gp_problem(13)
    X = space.snap(X)
    members = [GpMember(m.params, X, np.linspace(0.4, 0.8, 4)[::s]) for m, s in zip(members, (1, -1))]
    ctx = AcquisitionContext(None, X, np.zeros((4, 2)), (1, 1), members=[members], seed=5)
    b1 = propose_batch(ctx, space, 4, SMALL)
    b2 = propose_batch(ctx, space, 4, SMALL)
    assert b1.indices == b2.indices
    observed = {tuple(r) for r in space.unit_to_indices(X).tolist()}
    assert len(set(b1.indices)) == 4 and not observed & set(b1.indices)
    assert all(v >= 0 for v in b1.acquisition_values)
