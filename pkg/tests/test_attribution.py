import numpy as np
import pytest

from habmod.attribution import instance_seed, modality_contribution, sampled_shapley
from habmod.errors import EmptyBackground, ValidationError


def linear(w):
    return lambda Z: Z @ w


def test_linear_closed_form(rng):
    p = 6
    w = rng.normal(size=p)
    B = rng.normal(size=(100, p))
    x = rng.normal(size=p) * 2
    r = sampled_shapley(linear(w), x, B, n_permutations=2000, seed=1)
    exact = w * (x - B.mean(axis=0))
    assert np.max(np.abs(r.phi - exact)) <= 0.02 * abs(w @ x)
    assert abs(r.efficiency_gap) < 1e-9


def test_constant_model_zero(rng):
    r = sampled_shapley(lambda Z: np.full(len(Z), 3.0), rng.normal(size=4), rng.normal(size=(10, 4)), 50)
    assert np.all(r.phi == 0.0)


def test_symmetric_duplicates(rng):
    f = lambda Z: np.tanh(Z[:, 0] + Z[:, 1]) + 0.1 * Z[:, 2]  # noqa: E731
    B = rng.normal(size=(50, 3))
    B[:, 1] = B[:, 0]
    x = np.array([1.0, 1.0, 0.5])
    r = sampled_shapley(f, x, B, 2000, seed=3)
    assert abs(r.phi[0] - r.phi[1]) <= 0.05 * np.abs(r.phi[:2]).mean()


def test_dummy_feature(rng):
    f = lambda Z: Z[:, 0] ** 2 + Z[:, 1]  # noqa: E731
    r = sampled_shapley(f, rng.normal(size=3), rng.normal(size=(40, 3)), 500, seed=0)
    assert r.phi[2] == 0.0


def test_efficiency_within_mc_error(rng):
    w = rng.normal(size=(5, 3))
    f = lambda Z: np.exp(Z @ w) / np.exp(Z @ w).sum(axis=1, keepdims=True)  # noqa: E731
    B = rng.normal(size=(37, 5))
    gaps, ses = [], []
    for i in range(100):
        r = sampled_shapley(f, rng.normal(size=5), B, 60, seed=i)
        gaps.append(r.efficiency_gap)
        ses.append(r.standard_error)
    assert abs(np.mean(gaps)) <= 3 * np.sqrt(np.mean(np.square(ses)) / len(gaps)) + 1e-12
    assert np.all(np.abs(gaps) <= 3 * np.array(ses) + 1e-9 + 0.5)


def test_probability_target(rng):
    w = rng.normal(size=(4, 3))
    f = lambda Z: np.exp(Z @ w) / np.exp(Z @ w).sum(axis=1, keepdims=True)  # noqa: E731
    x = rng.normal(size=4)
    r = sampled_shapley(f, x, rng.normal(size=(20, 4)), 100, seed=2)
    assert r.target == int(np.argmax(f(x[None])[0]))


def test_deterministic_and_seed_by_row(rng):
    B = rng.normal(size=(20, 3))
    x = rng.normal(size=3)
    f = lambda Z: np.sin(Z).sum(axis=1)  # noqa: E731
    a = sampled_shapley(f, x, B, 100, seed=instance_seed(7, "plot-1"))
    b = sampled_shapley(f, x, B, 100, seed=instance_seed(7, "plot-1"))
    c = sampled_shapley(f, x, B, 100, seed=instance_seed(7, "plot-2"))
    assert np.array_equal(a.phi, b.phi) and not np.array_equal(a.phi, c.phi)


def test_errors(rng):
    with pytest.raises(EmptyBackground):
        sampled_shapley(lambda Z: Z[:, 0], np.ones(2), np.zeros((0, 2)))
    with pytest.raises(ValidationError):
        sampled_shapley(lambda Z: Z[:, 0], np.ones(2), np.zeros((3, 2)), n_permutations=0)


def _res(phi, mods):
    from habmod.attribution import AttributionResult
    return AttributionResult(np.array(phi, float), None, 0.0, 0.0, 0.0, 0.0, 1, 1, 0, (), tuple(mods))


def test_modality_shares():
    r = _res([0.3, -0.1], ["ABIO", "RSBIO"])
    assert r.modality_shares() == pytest.approx({"ABIO": 0.75, "RSBIO": 0.25})
    assert _res([0.2, 0.4], ["ABIO", "ABIO"]).modality_shares() == {"ABIO": 1.0}
    s = modality_contribution([r, _res([0.0, 0.0], ["ABIO", "RSBIO"])])
    assert s["n_used"] == 1 and s["n_undefined"] == 1 and s["shares"]["ABIO"] == pytest.approx(0.75)
    g = modality_contribution([r, r], groups=["A", "B"])
    assert set(g) == {"A", "B"}
    allzero = modality_contribution([_res([0.0, 0.0], ["ABIO", "SAR"])])
    assert np.isnan(allzero["shares"]["ABIO"]) and allzero["n_undefined"] == 1
