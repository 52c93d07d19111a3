import numpy as np
import pytest

from lib.aon import (
    AonMode,
    AonParam,
    Scaling,
    aon_backward,
    aon_forward,
    aon_forward_pre_sn,
    aon_transform,
    apply_gamma,
    clip_spectrum,
    freeze,
    orthonormality_deviation,
)
from lib.gradcheck import check_aon
from lib.linalg import frobenius_norm, spectral_norm_oracle
from lib.orthopoly import approximation_error
from lib.utils.errors import DegenerateWeightError, FrozenParameterError, InputError, ShapeError


def converged(w, q, mode=AonMode.STANDARD, scaling=Scaling.SPECTRAL, steps=200, seed=0):
    param = AonParam.create(w, q, seed, mode=mode, scaling=scaling)
    for _ in range(steps):
        aon_forward(param, update_state=True)
    return param


def test_orthonormal_rows_are_fixed(orthonormal_rows):
    param = converged(orthonormal_rows, 2)
    h, cache = aon_forward(param, update_state=False)
    np.testing.assert_allclose(h, orthonormal_rows, atol=1e-12)
    assert cache.sigma == pytest.approx(1.0, abs=1e-12)


def test_diagonal_example(diag_weight):
    param = converged(diag_weight, 2)
    h, cache = aon_forward(param, update_state=False)
    assert cache.sigma == pytest.approx(1.033378, abs=1e-6)
    np.testing.assert_allclose(h, np.diag([0.919484, 1.0]), atol=1e-6)


def test_q0_is_spectral_normalization(rng):
    left, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    right, _ = np.linalg.qr(rng.standard_normal((6, 4)))
    w = (left * np.array([2.0, 1.5, 1.0, 0.5])) @ right.T
    param = converged(w, 0)
    h, _ = aon_forward(param, update_state=False)
    np.testing.assert_allclose(h, w / spectral_norm_oracle(w), atol=1e-10)


def test_pre_sn_example(diag_weight):
    param = converged(diag_weight, 2, mode=AonMode.PRE_SN)
    h, cache = aon_forward_pre_sn(param, update_state=False)
    assert cache.sigma == pytest.approx(np.sqrt(1.5), abs=1e-12)
    np.testing.assert_allclose(h, np.diag([0.866025, 1.0]), atol=1e-6)


def test_pre_sn_entry_requires_pre_sn_mode(diag_weight):
    with pytest.raises(InputError):
        aon_forward_pre_sn(AonParam.create(diag_weight, 2, seed=0))


def test_transform_contract_on_ensemble(spectrum_ensemble):
    for i, w in enumerate(spectrum_ensemble[:20]):
        param = converged(w, 2, steps=1000, seed=i)
        h, cache = aon_forward(param, update_state=False)
        sigma = cache.sigma
        assert abs(spectral_norm_oracle(h) - 1.0) < 1e-3
        deviation = frobenius_norm(h @ h.T - np.eye(8) / sigma**2)
        assert deviation < approximation_error(w, 2) / sigma**2 + 1e-9


def test_orthonormality_deviation_equals_approximation_error(spectrum_ensemble):
    w = spectrum_ensemble[0]
    h, cache = aon_forward(converged(w, 3), update_state=False)
    assert orthonormality_deviation(h, cache.sigma) == pytest.approx(approximation_error(w, 3), abs=1e-10)


def test_frobenius_scaling_gives_unit_frobenius_norm(rng):
    param = AonParam.create(rng.standard_normal((3, 5)), 2, seed=0, scaling=Scaling.FROBENIUS)
    h, _ = aon_forward(param)
    assert frobenius_norm(h) == pytest.approx(1.0, abs=1e-12)


def test_zero_weight_is_degenerate():
    with pytest.raises(DegenerateWeightError):
        aon_forward(AonParam.create(np.zeros((2, 3)), 2, seed=0))


def test_update_state_flag(rng):
    param = AonParam.create(rng.standard_normal((3, 4)), 2, seed=0)
    u = param.state.u.copy()
    aon_forward(param, update_state=False)
    assert np.array_equal(param.state.u, u)
    aon_forward(param, update_state=True)
    assert not np.array_equal(param.state.u, u)


def test_transform_matches_forward_without_update(rng):
    param = converged(rng.standard_normal((3, 5)), 2, steps=5)
    h, cache = aon_forward(param, update_state=False)
    h2, _ = aon_transform(param.w, 2, param.state.u, param.state.v)
    assert np.array_equal(h, h2)


@pytest.mark.parametrize("q", [0, 1, 2, 4])
@pytest.mark.parametrize("shape", [(4, 6), (6, 4), (5, 5)])
def test_backward_matches_finite_differences(q, shape):
    assert check_aon(q, *shape, seed=0).error < 1e-4


@pytest.mark.parametrize("mode,scaling", [
    (AonMode.PRE_SN, Scaling.SPECTRAL),
    (AonMode.STANDARD, Scaling.FROBENIUS),
    (AonMode.PRE_SN, Scaling.FROBENIUS),
])
def test_backward_variants(mode, scaling):
    assert check_aon(2, 4, 6, seed=3, mode=mode, scaling=scaling).error < 1e-4


def test_scale_invariant_loss_has_zero_gradient():
    param = converged(np.array([[0.7]]), 0, steps=3)
    _, cache = aon_forward(param, update_state=False)
    grad = aon_backward(cache, param, np.array([[2.0]]))
    assert abs(grad[0, 0]) < 1e-12
    assert check_aon(0, 1, 1, seed=0).passed


def test_corrupted_gradient_fails():
    assert not check_aon(2, 4, 6, seed=0, corrupt=True).passed


def test_backward_shape_check(rng):
    param = AonParam.create(rng.standard_normal((3, 4)), 2, seed=0)
    _, cache = aon_forward(param)
    with pytest.raises(ShapeError):
        aon_backward(cache, param, np.ones((4, 3)))


def test_freeze(rng):
    param = converged(rng.standard_normal((3, 5)), 2, steps=10)
    expected, _ = aon_forward(param, update_state=False)
    frozen = freeze(param)
    assert frozen.state is None
    h1, cache = aon_forward(frozen)
    h2, _ = aon_forward(frozen)
    assert cache is None
    assert np.array_equal(h1, expected) and np.array_equal(h1, h2)
    assert freeze(frozen) is frozen
    with pytest.raises(FrozenParameterError):
        aon_backward(None, frozen, np.ones((3, 5)))


def test_apply_gamma():
    z = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(apply_gamma(z, np.array([1.0, 2.0, 0.5])), [[0, 2, 1], [3, 8, 2.5]])
    with pytest.raises(ShapeError):
        apply_gamma(z, np.ones(2))


@pytest.mark.parametrize("q", [0, 2])
def test_fresh_parameter_is_normalized_without_training(q):
    rng = np.random.default_rng(99)
    for seed in range(30):
        w = rng.standard_normal((6, 9)) / 3.0
        h, cache = aon_forward(AonParam.create(w, q, seed), update_state=False)
        assert cache.sigma > 0.0
        assert abs(spectral_norm_oracle(h) - 1.0) < 0.25


def test_fresh_parameter_freezes():
    w = np.random.default_rng(5).standard_normal((4, 7))
    param = AonParam.create(w, 2, seed=17)
    expected, _ = aon_forward(param, update_state=False)
    assert np.array_equal(freeze(param).frozen_h, expected)


@pytest.mark.parametrize("q", [2, 4])
def test_deviation_below_spectral_normalization(spectrum_ensemble, q):
    for i, w in enumerate(spectrum_ensemble[:10]):
        h, cache = aon_forward(converged(w, q, steps=300, seed=i), update_state=False)
        h0, cache0 = aon_forward(converged(w, 0, steps=300, seed=i), update_state=False)
        assert orthonormality_deviation(h, cache.sigma) < orthonormality_deviation(h0, cache0.sigma)


def test_pre_sn_equals_standard_at_q0(rng):
    w = rng.standard_normal((4, 6))
    standard, _ = aon_forward(converged(w, 0), update_state=False)
    pre_sn, _ = aon_forward(converged(w, 0, mode=AonMode.PRE_SN), update_state=False)
    np.testing.assert_allclose(pre_sn, standard, atol=1e-12)


def test_clip_spectrum(rng):
    left, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    right, _ = np.linalg.qr(rng.standard_normal((5, 3)))
    w = (left * np.array([3.0, 0.8, 0.2])) @ right.T
    clipped = clip_spectrum(w)
    np.testing.assert_allclose(np.linalg.svd(clipped, compute_uv=False), [1.0, 0.8, 0.2], atol=1e-12)
    inside = w / 4.0
    assert clip_spectrum(inside) is inside
    with pytest.raises(InputError):
        clip_spectrum(w, bound=0.0)
