import math

import numpy as np
import pytest

from habmod.errors import NonFiniteLogits, ValidationError, ZeroCount
from habmod.losses import (LOSS_KINDS, LossSpec, batch_loss_and_grad, class_weights, ldam_margins,
                           loss_and_grad)


def test_inverse_frequency_symmetric():
    assert np.allclose(class_weights([10, 10], "inverse_frequency").weights, [1.0, 1.0])


def test_inverse_frequency_unnormalized_example():
    w = class_weights([90, 10], "inverse_frequency", normalize=False).weights
    assert np.allclose(w, [0.5556, 5.0], atol=1e-3)


def test_weights_sum_to_k():
    for scheme in ("inverse_frequency", "effective_number", "uniform"):
        w = class_weights([90, 10, 3], scheme).weights
        assert math.isclose(w.sum(), 3.0) and (w > 0).all()


def test_effective_number_example():
    w = class_weights([1, 10], "effective_number", beta=0.999).weights
    assert np.allclose(w, [1.8174, 0.1826], atol=1e-3)


def test_zero_count():
    with pytest.raises(ZeroCount):
        class_weights([0, 3])
    with pytest.raises(ZeroCount):
        ldam_margins([3, 0])


def test_margins_examples():
    assert np.allclose(ldam_margins([16, 1], 0.5), [0.25, 0.5])
    assert np.allclose(ldam_margins([5, 5, 5], 0.5), [0.5, 0.5, 0.5])
    assert np.allclose(ldam_margins([81, 16, 1], 0.5), [0.1667, 0.25, 0.5], atol=1e-4)


def test_ce_example():
    loss, grad = loss_and_grad([0.0, 0.0, 0.0], 0, LossSpec("CE"), [1, 1, 1])
    assert math.isclose(loss, math.log(3))
    assert np.allclose(grad, [-2 / 3, 1 / 3, 1 / 3])


def test_focal_example():
    loss, _ = loss_and_grad([0.0, 0.0], 0, LossSpec("FL", gamma=2.0), [1, 1])
    assert math.isclose(loss, 0.25 * math.log(2), rel_tol=1e-12)


def test_spec_requires_weights():
    with pytest.raises(ValidationError):
        LossSpec("WCE")
    with pytest.raises(ValidationError):
        LossSpec("CE", gamma=-1)


def test_nonfinite_logits():
    with pytest.raises(NonFiniteLogits):
        loss_and_grad([0.0, np.inf], 0, LossSpec("CE"), [1, 1])


def _spec(kind, rng):
    w = rng.choice(["inverse_frequency", "effective_number"]) if kind in ("WCE", "wFL", "wLDAM") else None
    return LossSpec(kind, gamma=float(rng.uniform(0, 4)), max_margin=float(rng.uniform(0.1, 1.0)), weights=w)


def _fd_check(kind, rng, h=1e-5):
    K = int(rng.integers(2, 7))
    z = rng.normal(0, 2, K)
    y = int(rng.integers(K))
    counts = rng.integers(1, 200, K)
    spec = _spec(kind, rng)
    _, g = loss_and_grad(z, y, spec, counts)
    num = np.empty(K)
    for j in range(K):
        e = np.zeros(K)
        e[j] = h
        num[j] = (loss_and_grad(z + e, y, spec, counts)[0] - loss_and_grad(z - e, y, spec, counts)[0]) / (2 * h)
    return float(np.max(np.abs(g - num) / np.maximum(np.abs(num), 1e-8)))


@pytest.mark.parametrize("kind", LOSS_KINDS)
def test_gradient_finite_difference(kind, rng):
    worst = max(_fd_check(kind, rng) for _ in range(40))
    assert worst <= 1e-5


def test_focal_gamma0_is_ce_exactly(rng):
    for _ in range(50):
        K = int(rng.integers(2, 6))
        z = rng.normal(0, 3, (8, K))
        y = rng.integers(0, K, 8)
        c = rng.integers(1, 50, K)
        a = batch_loss_and_grad(z, y, LossSpec("FL", gamma=0.0), c)
        b = batch_loss_and_grad(z, y, LossSpec("CE"), c)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_reduction_identities(rng):
    for _ in range(50):
        K = int(rng.integers(2, 6))
        z = rng.normal(0, 3, K)
        y = int(rng.integers(K))
        c = rng.integers(1, 50, K)
        ce = loss_and_grad(z, y, LossSpec("CE"), c)
        wce_u = loss_and_grad(z, y, LossSpec("WCE", weights="uniform"), c)
        assert np.isclose(ce[0], wce_u[0], rtol=1e-12) and np.allclose(ce[1], wce_u[1], rtol=1e-12)
        wce = loss_and_grad(z, y, LossSpec("WCE", weights="inverse_frequency"), c)
        wfl0 = loss_and_grad(z, y, LossSpec("wFL", gamma=0.0, weights="inverse_frequency"), c)
        assert np.isclose(wce[0], wfl0[0], rtol=1e-12) and np.allclose(wce[1], wfl0[1], rtol=1e-12)
        ld = loss_and_grad(z, y, LossSpec("LDAM", max_margin=1e-9), c)
        assert abs(ld[0] - ce[0]) <= 1e-6 and np.max(np.abs(ld[1] - ce[1])) <= 1e-6


def test_positivity_and_limit(rng):
    for kind in LOSS_KINDS:
        spec = LossSpec(kind, weights="inverse_frequency" if kind.startswith(("W", "w")) else None)
        for _ in range(20):
            z = rng.normal(0, 3, 4)
            assert loss_and_grad(z, 1, spec, [5, 6, 7, 8])[0] >= 0
    for kind in ("CE", "WCE", "FL", "wFL"):
        spec = LossSpec(kind, weights="inverse_frequency" if kind in ("WCE", "wFL") else None)
        assert loss_and_grad([40.0, 0.0, 0.0], 0, spec, [5, 6, 7])[0] < 1e-12


def test_focal_monotone_in_gamma(rng):
    for _ in range(50):
        z = rng.normal(0, 1, 3)
        z[0] += 3.0  # p_y >= 0.5
        losses = [loss_and_grad(z, 0, LossSpec("FL", gamma=g), [1, 1, 1])[0] for g in np.linspace(0, 5, 11)]
        assert all(b <= a + 1e-15 for a, b in zip(losses, losses[1:]))


def test_spec_dict_roundtrip():
    d = {"loss": "wLDAM", "gamma": 2.0, "max_margin": 0.5, "weights": "effective_number", "beta": 0.999}
    spec = LossSpec.from_dict(d)
    assert spec.kind == "wLDAM" and spec.to_dict() == d
