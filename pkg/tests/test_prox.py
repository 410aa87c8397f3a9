import math

import numpy as np
import pytest
import scipy.linalg

from nllr.grouping import MatchConfig, find_group
from nllr.patches import PatchGroup, PatchIndex
from nllr.prox import (
    ProxParams,
    check_theorem1,
    compute_lambda,
    compute_weights,
    group_prox,
    nnm_prox,
    shrink_groups,
)

PARAMS = ProxParams(
    p=0.7, rho=0.05, delta=2.0, epsilon=0.1, varsigma=0.3,
    iters=2, total_elems=960, pixels=256,
)


def oracle_gst(gamma, w, p, iters):
    # Literal scalar reading of the fixed-point shrinkage.
    if p == 1.0:
        thr = w
    else:
        base = 2.0 * w * (1.0 - p)
        thr = base ** (1.0 / (2.0 - p)) + w * p * base ** ((p - 1.0) / (2.0 - p)) if w > 0 else 0.0
    if abs(gamma) <= thr:
        return 0.0
    s = abs(gamma)
    for _ in range(iters):
        s = abs(gamma) - w * p * s ** (p - 1.0)
    return math.copysign(s, gamma)


def oracle_group_prox(mat, params, uniform=False):
    """Independent route: scipy gesvd SVD plus the scalar shrinkage above."""
    u, sv, vt = scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")
    theta = float(np.var(sv))
    lam = 2.0 * math.sqrt(2.0) * params.delta**2 / (theta + params.varsigma)
    tau = lam * params.total_elems / (params.rho * params.pixels)
    if uniform:
        w = np.full_like(sv, tau)
        p = 1.0
    else:
        w = tau / (sv + params.epsilon)
        p = params.p
    s_new = np.array([oracle_gst(g, wi, p, params.iters) for g, wi in zip(sv, w)])
    return u @ np.diag(s_new) @ vt


def test_weights_examples():
    np.testing.assert_allclose(compute_weights(np.array([3.0, 1.0]), 0.1), [1 / 3.1, 1 / 1.1])
    np.testing.assert_allclose(compute_weights(np.zeros(3), 0.5), [2.0, 2.0, 2.0])
    with pytest.raises(ValueError):
        compute_weights(np.array([-1.0]), 0.1)


def test_weights_are_non_increasing_in_sigma(rng):
    sv = np.sort(rng.uniform(0, 100, size=30))[::-1]
    w = compute_weights(sv, 0.1)
    assert np.all(np.diff(w) >= 0)


def test_lambda_zero_spread():
    want = 2.0 * math.sqrt(2.0) * 4.0 / 0.3
    assert compute_lambda(np.array([5.0, 5.0, 5.0]), 2.0, 0.3) == pytest.approx(want)


def test_lambda_known_case():
    got = compute_lambda(np.array([3.0, 1.0]), math.sqrt(2.0), 0.3)
    assert got == pytest.approx(2.0 * math.sqrt(2.0) * 2.0 / 1.3, rel=1e-12)
    assert got == pytest.approx(4.3514, abs=5e-4)


def test_lambda_batch_axis(rng):
    sv = rng.uniform(0, 50, size=(7, 5))
    lams = compute_lambda(sv, 1.5, 0.4)
    assert lams.shape == (7,)
    for i in range(7):
        assert lams[i] == pytest.approx(compute_lambda(sv[i], 1.5, 0.4))


def test_lambda_mean_square_estimator():
    sv = np.array([3.0, 1.0])
    got = compute_lambda(sv, 1.0, 0.0, estimator="mean-square")
    assert got == pytest.approx(2.0 * math.sqrt(2.0) / 5.0)
    with pytest.raises(ValueError):
        compute_lambda(sv, 1.0, 0.1, estimator="median")


def test_group_prox_zero_matrix():
    np.testing.assert_array_equal(group_prox(np.zeros((6, 4)), PARAMS), np.zeros((6, 4)))


def test_group_prox_zero_delta_is_identity(rng):
    mat = rng.normal(size=(8, 12)) * 20
    params = ProxParams(p=0.7, rho=0.05, delta=0.0, epsilon=0.1, varsigma=0.3)
    np.testing.assert_allclose(group_prox(mat, params), mat, atol=1e-10)


@pytest.mark.parametrize("seed", range(4))
def test_group_prox_matches_independent_svd_route(seed):
    rng = np.random.default_rng(seed)
    mat = rng.normal(size=(8, 12)) * 10
    got = group_prox(mat, PARAMS)
    want = oracle_group_prox(mat, PARAMS)
    err = np.linalg.norm(got - want) / max(np.linalg.norm(want), 1e-12)
    assert err < 1e-6


def test_group_prox_singular_values_shrink_elementwise(rng):
    mat = rng.normal(size=(10, 14)) * 5
    mat[0] += 40  # give it a dominant direction
    sv_in = np.linalg.svd(mat, compute_uv=False)
    sv_out = np.linalg.svd(group_prox(mat, PARAMS), compute_uv=False)
    assert np.all(sv_out <= sv_in + 1e-9)
    assert np.all(np.diff(sv_out) <= 1e-9)


def test_group_prox_never_raises_rank(rng):
    low = rng.normal(size=(9, 3)) @ rng.normal(size=(3, 12))
    out = group_prox(low, PARAMS)
    assert np.linalg.matrix_rank(out, tol=1e-8) <= np.linalg.matrix_rank(low, tol=1e-8)


def test_group_prox_unitary_invariance(rng):
    mat = rng.normal(size=(8, 10)) * 8
    q1, _ = np.linalg.qr(rng.normal(size=(8, 8)))
    q2, _ = np.linalg.qr(rng.normal(size=(10, 10)))
    a = group_prox(q1 @ mat @ q2.T, PARAMS)
    b = q1 @ group_prox(mat, PARAMS) @ q2.T
    assert np.linalg.norm(a - b) / np.linalg.norm(b) < 1e-6


def test_shrunk_singular_values_match_scalar_grid_search(rng):
    """Each output singular value solves its own scalar problem."""
    mat = np.outer(rng.normal(size=8), rng.normal(size=10)) * 30 + rng.normal(size=(8, 10))
    params = ProxParams(p=0.7, rho=0.05, delta=1.0, epsilon=0.1, varsigma=0.3,
                        iters=30, total_elems=960, pixels=256)
    sv = np.linalg.svd(mat, compute_uv=False)
    lam = compute_lambda(sv, params.delta, params.varsigma)
    tau = lam * params.total_elems / (params.rho * params.pixels)
    w = tau * compute_weights(sv, params.epsilon)
    out_sv = np.linalg.svd(group_prox(mat, params), compute_uv=False)
    grid = np.arange(0.0, float(sv[0]) + 1e-3, 1e-3)
    for j, (g, wj) in enumerate(zip(sv, w)):
        vals = 0.5 * (grid - g) ** 2 + wj * grid**params.p
        want = grid[np.argmin(vals)]
        assert abs(out_sv[j] - want) < 5e-3, j


def test_nnm_prox_zero_tau_is_identity(rng):
    mat = rng.normal(size=(6, 9))
    np.testing.assert_allclose(nnm_prox(mat, 0.0), mat, atol=1e-12)


def test_nnm_prox_on_diagonal_matrix():
    mat = np.diag([5.0, 3.0, 1.0])
    out = nnm_prox(mat, 2.0)
    np.testing.assert_allclose(np.sort(np.linalg.svd(out, compute_uv=False))[::-1], [3.0, 1.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_nnm_prox_matches_svt_oracle(seed):
    rng = np.random.default_rng(seed)
    mat = rng.normal(size=(7, 11)) * 6
    tau = float(rng.uniform(0.5, 5.0))
    u, sv, vt = scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")
    want = u @ np.diag(np.maximum(sv - tau, 0.0)) @ vt
    assert np.linalg.norm(nnm_prox(mat, tau) - want) < 1e-8


def test_uniform_weight_batch_equals_nnm(rng):
    stack = rng.normal(size=(5, 8, 10)) * 12
    out, _, fails = shrink_groups(stack, PARAMS, uniform_weights=True)
    assert fails == 0
    for i in range(5):
        sv = np.linalg.svd(stack[i], compute_uv=False)
        lam = compute_lambda(sv, PARAMS.delta, PARAMS.varsigma)
        tau = lam * PARAMS.total_elems / (PARAMS.rho * PARAMS.pixels)
        np.testing.assert_allclose(out[i], nnm_prox(stack[i], tau), atol=1e-10)


def test_shrink_groups_matches_singleton_path(rng):
    stack = rng.normal(size=(4, 6, 9)) * 15
    out, reg, fails = shrink_groups(stack, PARAMS)
    assert fails == 0
    assert reg.shape == (4,)
    for i in range(4):
        np.testing.assert_allclose(out[i], group_prox(stack[i], PARAMS), atol=1e-10)


def test_trace_inequality(rng):
    """Inner products are bounded by the product of sorted singular values."""
    for _ in range(20):
        a = rng.normal(size=(9, 13))
        b = rng.normal(size=(9, 13))
        lhs = float(np.trace(a.T @ b))
        rhs = float(np.sum(np.linalg.svd(a, compute_uv=False) * np.linalg.svd(b, compute_uv=False)))
        assert lhs <= rhs + 1e-9


def test_check_theorem1_identical_images_is_zero(rng):
    img = rng.normal(size=(32, 32))
    group = PatchGroup(matrix=np.zeros((16, 2)), members=[PatchIndex(0, 0), PatchIndex(5, 5)])
    assert check_theorem1(img, img, [group]) == 0.0


def test_check_theorem1_small_gap_for_iid_error(natural_crops):
    r = natural_crops["camera"]
    rng = np.random.default_rng(0)
    z = r + rng.normal(0, 5.0, r.shape)
    cfg = MatchConfig(group_size=60, window=25, patch_size=8)
    from nllr.patches import exemplar_grid

    groups = []
    for ex in exemplar_grid(r, 64, 4)[::7]:
        g = find_group(r, ex, cfg)
        groups.append(PatchGroup(matrix=g.matrix, members=g.members))
    gap = check_theorem1(z, r, groups)
    assert gap < 0.1


def test_check_theorem1_concentrated_error_breaks_assumption(rng):
    """Error living only on never-sampled pixels defeats the equivalence."""
    r = rng.normal(size=(24, 24))
    z = r.copy()
    z[20:, 20:] += 50.0
    group = PatchGroup(matrix=np.zeros((16, 2)), members=[PatchIndex(0, 0), PatchIndex(2, 2)])
    gap = check_theorem1(z, r, [group])
    assert gap > 0.5


def test_params_validation():
    with pytest.raises(ValueError):
        ProxParams(p=0.0, rho=0.05, delta=1.0, epsilon=0.1, varsigma=0.3)
    with pytest.raises(ValueError):
        ProxParams(p=0.5, rho=0.0, delta=1.0, epsilon=0.1, varsigma=0.3)
    with pytest.raises(ValueError):
        ProxParams(p=0.5, rho=0.1, delta=-1.0, epsilon=0.1, varsigma=0.3)
    with pytest.raises(ValueError):
        ProxParams(p=0.5, rho=0.1, delta=1.0, epsilon=0.1, varsigma=0.3, theta_estimator="mode")
