import numpy as np
import pytest

from nasbo.pareto import pareto_front
from nasbo.problems import PROBLEMS, synthetic_problem
from nasbo.search_space import PAPER_DEFAULT, encode
from nasbo.sobol import sobol_points


@pytest.mark.parametrize("name", PROBLEMS)
def test_deterministic_and_seeded(name, paper_space):
    a, b = synthetic_problem(name, 4), synthetic_problem(name, 4)
    X = paper_space.snap(sobol_points(32, paper_space.dim, seed=1))
    np.testing.assert_array_equal(a.evaluate_unit(X), b.evaluate_unit(X))
    assert a.info == b.info
    assert not np.array_equal(a.evaluate_unit(X), synthetic_problem(name, 5).evaluate_unit(X))


@pytest.mark.parametrize("name", PROBLEMS)
def test_base_values_positive(name):
    for seed in range(5):
        assert np.all(synthetic_problem(name, seed).base_values > 0)


@pytest.mark.parametrize("name", PROBLEMS)
def test_true_front_is_attainable_and_undominated(name, paper_space):
    prob = synthetic_problem(name, 2)
    F = prob.true_front()
    assert F.shape[1] == 2 and len(F) >= 2
    np.testing.assert_allclose(pareto_front(F), F[np.argsort(F[:, 0])])
    # nothing on a quasi-random sample of the grid beats the front
    Y = prob.evaluate_unit(paper_space.snap(sobol_points(2048, paper_space.dim, seed=3)))
    for y in Y:
        assert not np.any(np.all(y <= F, axis=1) & np.any(y < F - 1e-12, axis=1))


def test_noise_is_keyed_by_configuration(paper_space):
    prob = synthetic_problem("sparse-quadratic", 0, noise_std=0.1)
    cfg = dict(PAPER_DEFAULT)
    assert prob(cfg) == prob(cfg)
    clean = synthetic_problem("sparse-quadratic", 0)(cfg)
    assert prob(cfg) != clean


def test_sparse_quadratic_structure(paper_space):
    prob = synthetic_problem("sparse-quadratic", 0)
    active = prob.info["active_dims"]
    assert len(active) == 4
    x = encode(paper_space, PAPER_DEFAULT)[None, :]
    # optimum of each objective is zero and only the active dims matter
    for m, opt in enumerate(prob.info["optima"]):
        z = x.copy()
        z[0, active] = opt
        assert prob.evaluate_unit(z)[0, m] == pytest.approx(0.0, abs=1e-15)
    moved = x.copy()
    inactive = [i for i in range(paper_space.dim) if i not in active]
    moved[0, inactive] = 1 - moved[0, inactive]
    np.testing.assert_array_equal(prob.evaluate_unit(moved), prob.evaluate_unit(x))


def test_dtlz2_front_on_unit_circle():
    prob = synthetic_problem("dtlz2-embedded", 1)
    F = prob.true_front()
    np.testing.assert_allclose(np.hypot(F[:, 0], F[:, 1]), 1.0)


def test_unknown_problem():
    with pytest.raises(KeyError):
        synthetic_problem("rosenbrock")
