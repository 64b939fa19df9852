import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sar_atr.model import ATRModel
from sar_atr.robustness import (
    ATTACK_FIELDS,
    LinearModel,
    PerturbationResult,
    deepfool,
    deepfool_batch,
    evaluate_rho,
    fgsm_image,
    order_by_robustness,
    rho_adv,
    write_attack_csv,
)


class ConstantModel:
    """Always predicts class 0; its input gradients vanish."""

    def logits(self, images):
        return np.tile([1.0, 0.0, 0.0, 0.0], (len(images), 1))

    def input_gradients(self, images, directions=None):
        d = 4 if directions is None else len(directions)
        return self.logits(images), np.zeros((len(images), d) + np.shape(images)[1:])


def binary_linear(rng, shape=(6, 6)):
    w = rng.standard_normal((2, int(np.prod(shape))))
    b = rng.standard_normal(2)
    return LinearModel(w, b)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 100_000))
def test_linear_binary_closed_form(seed):
    rng = np.random.default_rng(seed)
    model = binary_linear(rng)
    x = rng.standard_normal((6, 6))
    res = deepfool(x, model, overshoot=0.02)
    k0 = int(np.argmax(model.logits(x[None])[0]))
    sign = 1.0 if k0 == 0 else -1.0
    w = sign * (model.weight[1] - model.weight[0])
    b = sign * (model.bias[1] - model.bias[0])
    expected = -(w @ x.ravel() + b) * w / (w @ w)
    assert res.iterations == 1 and res.success
    assert np.allclose(res.r_hat.ravel(), expected, rtol=0, atol=1e-6 * np.linalg.norm(expected))
    assert res.norm_ratio == pytest.approx(np.linalg.norm(expected) / np.linalg.norm(x))


def test_already_misclassified():
    model = binary_linear(np.random.default_rng(1))
    x = np.random.default_rng(2).standard_normal((6, 6))
    wrong = 1 - int(np.argmax(model.logits(x[None])[0]))
    res = deepfool(x, model, label=wrong)
    assert res.iterations == 0 and not res.success and res.already_misclassified
    assert np.all(res.r_hat == 0)


def test_constant_model_never_succeeds():
    x = np.random.default_rng(3).standard_normal((5, 6, 6))
    summary, results = evaluate_rho(x, ConstantModel(), max_iter=10)
    assert not summary.defined and summary.rho is None
    assert summary.n_failed == 5 and summary.n_success == 0
    assert all(r.iterations == 0 for r in results)


def test_multiclass_linear_flips():
    rng = np.random.default_rng(4)
    model = LinearModel(rng.standard_normal((4, 36)), rng.standard_normal(4))
    x = rng.standard_normal((20, 6, 6))
    for r, xi in zip(deepfool_batch(x, model), x):
        assert r.success
        z = model.logits((xi + 1.02 * r.r_hat)[None])[0]
        assert np.argmax(z) != r.orig_class == np.argmax(model.logits(xi[None])[0])
        assert r.adv_class == np.argmax(z)


@pytest.fixture(scope="module")
def cnn_and_images(small_dataset):
    return ATRModel(seed=7, dtype=np.float64), small_dataset.images[:6].astype(np.float64)


def test_cnn_success_means_flip(cnn_and_images):
    model, x = cnn_and_images
    results = deepfool_batch(x, model, max_iter=20)
    assert any(r.success for r in results)
    for r, xi in zip(results, x):
        if r.success:
            assert model.predict((xi + 1.02 * r.r_hat)[None])[0] != r.orig_class


def test_norm_non_increasing_with_budget(cnn_and_images):
    """Once an attack has succeeded, extra budget never lengthens it."""
    model, x = cnn_and_images
    small = deepfool_batch(x, model, max_iter=3)
    large = deepfool_batch(x, model, max_iter=20)
    for a, b in zip(small, large):
        if a.success:
            assert np.linalg.norm(b.r_hat) <= np.linalg.norm(a.r_hat)
            assert b.iterations == a.iterations


def test_rho_definition_and_duplication():
    r = np.full((2, 2), 0.5)
    x = np.ones((2, 2))
    one = PerturbationResult(r, 1, True, float(np.linalg.norm(r) / np.linalg.norm(x)))
    assert rho_adv([one]).rho == pytest.approx(0.5)
    rng = np.random.default_rng(5)
    results = [PerturbationResult(r, 1, bool(s), float(v))
               for s, v in zip(rng.integers(0, 2, 10), rng.uniform(0, 1, 10))]
    assert rho_adv(results + results).rho == pytest.approx(rho_adv(results).rho)
    assert rho_adv(results).n_failed == sum(not r.success for r in results)


def test_evaluate_rho_rejects_empty():
    with pytest.raises(ValueError):
        evaluate_rho(np.zeros((0, 6, 6)), ConstantModel())


def test_nonfinite_gradients_abort():
    class Broken(ConstantModel):
        def input_gradients(self, images, directions=None):
            z, g = super().input_gradients(images, directions)
            return np.array([[0.0, 1.0, 0.0, 0.0]] * len(images)), g * np.nan

    with pytest.raises(FloatingPointError):
        deepfool(np.ones((6, 6)), Broken())


def test_fgsm_image(cnn_and_images):
    model, x = cnn_and_images
    y = model.predict(x)
    assert np.array_equal(fgsm_image(x, y, model, 0.0), x.astype(np.float32))
    out = fgsm_image(x, y, model, 0.01)
    _, grad = model.loss_input_gradient(x.astype(np.float32), y)
    d = out - x.astype(np.float32)
    nz = grad != 0
    assert np.allclose(np.abs(d[nz]), 0.01, atol=1e-6)
    assert np.all(d[~nz] == 0)


def test_order_by_robustness():
    scores = {"BASIC": 0.02, "ADV": 0.03, "SIM": None, "POSE": 0.01}
    assert order_by_robustness(scores) == ["ADV", "BASIC", "POSE", "SIM"]


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.text("ABCDEF", min_size=1, max_size=4),
                       st.floats(0, 1, allow_nan=False), min_size=1))
def test_order_is_descending(scores):
    order = order_by_robustness(scores)
    values = [scores[k] for k in order]
    assert values == sorted(values, reverse=True)


def test_attack_csv(tmp_path):
    ok = PerturbationResult(np.zeros(1), 3, True, 0.0123, orig_class=1, adv_class=2)
    bad = PerturbationResult(np.zeros(1), 50, False, 0.5, orig_class=0, adv_class=0)
    write_attack_csv(tmp_path / "a.csv", [7, 8], [1, 3], [ok, bad])
    rows = list(csv.reader(open(tmp_path / "a.csv")))
    assert tuple(rows[0]) == ATTACK_FIELDS
    assert rows[1] == ["7", "1", "1", "2", "3", "0.01230000"]
    assert rows[2] == ["8", "3", "0", "", "50", ""]
