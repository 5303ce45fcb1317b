import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcscore.covparam import GammaPoint, NuisanceGrid, build_blocks, make_grid, w_matrix_q2
from vcscore.data import Dataset
from vcscore.expfam import FamilySpec, cumulant_derivatives, moment_oracle
from vcscore.nullfit import fit_null, loglik, observation_trials
from vcscore.scorestats import (
    one_sided_sup,
    raw_statistics,
    score_profile,
    standardize,
    sup_statistics,
    variance_components,
)

from conftest import random_dataset
from test_nullfit import numeric_hessian

FAMILIES = {
    "bernoulli": FamilySpec("bernoulli"),
    "binomial": FamilySpec("binomial", 3),
    "gaussian": FamilySpec("gaussian"),
}


def make(rng, family="bernoulli", **kw):
    fam = FAMILIES[family]
    ds = random_dataset(rng, family=family, trials=3 if family == "binomial" else None, **kw)
    return ds, fam, fit_null(ds, fam)


def naive_raw(ds, U, V, W):
    """Ordered-pair double loop with b computed on the fly."""
    t_p = t_o = 0.0
    g = ds.groups
    for K in range(ds.N):
        for L in range(ds.N):
            if g[K] != g[L]:
                continue
            b = ds.Z[K] @ W @ ds.Z[L]
            if K == L:
                t_o += b * (U[K] ** 2 - V[K])
            else:
                t_p += b * U[K] * U[L]
    return t_p, t_o


def dense_raw(ds, U, V, W):
    """T_S = U^T B U - tr(VB), then split off the diagonal."""
    B = build_blocks(ds, W).dense()
    t_s = U @ B @ U - np.sum(np.diag(B) * V)
    t_o = np.sum(np.diag(B) * (U**2 - V))
    return t_s - t_o, t_o, t_s


def oracle_variances(ds, fam, fit, W):
    """I_EP, I_EO from brute-force moments, a numeric Hessian and finite-difference H."""
    B = build_blocks(ds, W).dense()
    trials = observation_trials(ds, fam)
    phi = fit.phi_hat
    mom = [
        moment_oracle(fam, fit.eta_hat[K], phi, None if trials is None else int(trials[K]))
        for K in range(ds.N)
    ]
    eu2 = np.array([m.eu2 for m in mom])
    var_d = np.array([m.var_u2_minus_v for m in mom])
    off = B * B
    np.fill_diagonal(off, 0.0)
    i_ep = 2.0 * eu2 @ off @ eu2
    d = np.diag(B)
    i_to = np.sum(d * d * var_d)
    # h_K = E[-dD_K/dxi]; only V depends on beta once E U dU = 0 is used
    h = 1e-6
    Hb = np.zeros(ds.X.shape[1])
    for a in range(ds.X.shape[1]):
        step = h * ds.X[:, a]
        a2p, _, _ = cumulant_derivatives(fam, fit.eta_hat + step, trials)
        a2m, _, _ = cumulant_derivatives(fam, fit.eta_hat - step, trials)
        Hb[a] = np.sum(d * phi * (a2p - a2m) / (2 * h))
    if fam.kind == "gaussian":
        # D = phi^2 e^2 - phi; E[-dD/dphi] = 1 - 2 phi E e^2 = -1
        H = np.append(Hb, -np.sum(d))
        xi = np.append(fit.beta_hat, phi)
        I = -numeric_hessian(lambda v: loglik(fam, ds.y, ds.X @ v[:-1], phi=v[-1]), xi)
    else:
        H = Hb
        I = -numeric_hessian(lambda b: loglik(fam, ds.y, ds.X @ b, trials), fit.beta_hat)
    i_eo = max(i_to - H @ np.linalg.solve(I, H), 0.0)
    return i_ep, i_eo, i_to


class TestRawStatistics:
    def test_two_observation_example(self):
        blocks = SimpleNamespace(blocks=(np.ones((2, 2)),))
        assert raw_statistics([1.0, -1.0], [1.0, 1.0], blocks) == (-2.0, 0.0, -2.0)

    def test_zero_scores(self, rng):
        ds, fam, fit = make(rng)
        blocks = build_blocks(ds, w_matrix_q2((0.9, 0.2)))
        V = rng.uniform(0.1, 1, ds.N)
        t_p, t_o, t_s = raw_statistics(np.zeros(ds.N), V, blocks)
        assert t_p == 0.0
        assert t_o == pytest.approx(-np.sum(np.diag(blocks.dense()) * V))

    def test_zero_blocks(self, rng):
        ds, _, _ = make(rng)
        assert raw_statistics(rng.standard_normal(ds.N), np.ones(ds.N), build_blocks(ds, np.zeros((2, 2)))) == (0.0, 0.0, 0.0)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60)
    def test_oracle_equivalence(self, seed):
        rng = np.random.default_rng(seed)
        ds = random_dataset(rng, n=int(rng.integers(1, 8)), m=(1, 4), p=1)
        assert ds.N <= 30
        U = rng.standard_normal(ds.N)
        V = rng.uniform(0, 2, ds.N)
        W = w_matrix_q2((rng.uniform(0.01, math.pi), rng.uniform(-1, 1)))
        t_p, t_o, t_s = raw_statistics(U, V, build_blocks(ds, W))
        n_p, n_o = naive_raw(ds, U, V, W)
        d_p, d_o, d_s = dense_raw(ds, U, V, W)
        scale = 1.0 + np.sum(np.abs(U)) ** 2
        assert abs(t_p - n_p) <= 1e-10 * scale and abs(t_p - d_p) <= 1e-10 * scale
        assert abs(t_o - n_o) <= 1e-10 * scale and abs(t_o - d_o) <= 1e-10 * scale
        assert abs(t_s - d_s) <= 1e-10 * scale
        assert t_s == t_p + t_o

    def test_cluster_additivity(self, rng):
        ds, _, _ = make(rng, n=5)
        U, V = rng.standard_normal(ds.N), rng.uniform(0, 1, ds.N)
        blocks = build_blocks(ds, w_matrix_q2((1.2, -0.5)))
        total = raw_statistics(U, V, blocks)
        parts = np.zeros(3)
        for k, (lo, hi) in enumerate(zip(ds.offsets[:-1], ds.offsets[1:])):
            parts += raw_statistics(U[lo:hi], V[lo:hi], SimpleNamespace(blocks=(blocks.blocks[k],)))
        np.testing.assert_allclose(total, parts, rtol=1e-12, atol=1e-14)


class TestVarianceComponents:
    @pytest.mark.parametrize("family", sorted(FAMILIES))
    def test_against_oracle(self, rng, family):
        ds, fam, fit = make(rng, family, n=8, m=(2, 4))
        for g in [(0.4, 0.5), (math.pi / 2, 0.0), (2.5, -0.9)]:
            W = w_matrix_q2(g)
            i_ep, i_eo, i_es, j_n = variance_components(ds, fit, fam, build_blocks(ds, W), W)
            r_ep, r_eo, _ = oracle_variances(ds, fam, fit, W)
            assert i_ep == pytest.approx(r_ep, rel=1e-10)
            assert i_eo == pytest.approx(r_eo, rel=1e-6, abs=1e-9)
            assert i_es == i_ep + i_eo

    def test_gaussian_beta_correction_vanishes(self, rng):
        ds, fam, fit = make(rng, "gaussian", n=6)
        W = w_matrix_q2((1.0, 0.3))
        i_ep, i_eo, _, j_n = variance_components(ds, fit, fam, build_blocks(ds, W))
        p = ds.X.shape[1]
        assert np.all(j_n[:p] == 0.0)
        d = np.diag(build_blocks(ds, W).dense())
        i_to = np.sum(d * d) * 2 * fit.phi_hat**2
        # only the dispersion part corrects: H_phi = -sum b_KK, I_phiphi = N / (2 phi^2)
        expected = i_to - np.sum(d) ** 2 * 2 * fit.phi_hat**2 / ds.N
        assert i_eo == pytest.approx(max(expected, 0.0), rel=1e-10)

    def test_balanced_bernoulli_has_no_overdispersion_information(self):
        N = 12
        y = np.tile([0.0, 1.0], N // 2)
        ds = Dataset.from_arrays(y, np.ones((N, 1)), np.column_stack([np.ones(N), np.arange(N) % 3]), np.arange(N) // 3)
        fam = FamilySpec("bernoulli")
        fit = fit_null(ds, fam)
        profile = score_profile(ds, fit, make_grid((4, 3, 0.5)))
        np.testing.assert_allclose(profile.i_eo, 0.0, atol=1e-15)
        assert np.all(profile.degenerate[:, 1])
        assert np.all(profile.x_o == 0.0)

    def test_zero_w_all_degenerate(self, rng):
        ds, fam, fit = make(rng)
        grid = NuisanceGrid.from_matrices([GammaPoint(0.0, 0.0)], np.zeros((1, 2, 2)))
        profile = score_profile(ds, fit, grid)
        assert profile.degenerate.all()
        assert profile.n_degenerate == 1
        assert sup_statistics(profile).s_s == 0.0


class TestScoreProfile:
    @pytest.mark.parametrize("family", sorted(FAMILIES))
    def test_grid_form_matches_block_form(self, rng, family):
        ds, fam, fit = make(rng, family, n=7)
        grid = make_grid((3, 3, 0.75))
        profile = score_profile(ds, fit, grid)
        U = profile.terms.U
        V = profile.terms.V
        for k, W in enumerate(grid.W):
            blocks = build_blocks(ds, W)
            t = raw_statistics(U, V, blocks)
            v = variance_components(ds, fit, fam, blocks, W)
            np.testing.assert_allclose([profile.t_p[k], profile.t_o[k], profile.t_s[k]], t, rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose([profile.i_ep[k], profile.i_eo[k], profile.i_es[k]], v[:3], rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(profile.j_n[k], v[3], rtol=1e-10, atol=1e-14)

    def test_t_s_exact_sum(self, rng):
        ds, _, fit = make(rng, n=9)
        profile = score_profile(ds, fit, make_grid((5, 5, 0.9)))
        np.testing.assert_array_equal(profile.t_s, profile.t_p + profile.t_o)

    def test_standardized_identity(self, rng):
        ds, _, fit = make(rng, "binomial", n=9)
        pr = score_profile(ds, fit, make_grid((5, 5, 0.9)))
        ok = ~pr.degenerate.any(axis=1)
        lhs = pr.x_s * np.sqrt(pr.i_es)
        rhs = pr.x_p * np.sqrt(pr.i_ep) + pr.x_o * np.sqrt(pr.i_eo)
        np.testing.assert_allclose(lhs[ok], rhs[ok], rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("family", sorted(FAMILIES))
    def test_z_scaling_invariance(self, rng, family):
        ds, fam, fit = make(rng, family, n=8)
        grid = make_grid((4, 5, 0.8))
        a = score_profile(ds, fit, grid)
        c = 2.7
        b = score_profile(ds.with_scaled_z(c), fit, grid)
        np.testing.assert_allclose(b.t_p, c**2 * a.t_p, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(b.i_ep, c**4 * a.i_ep, rtol=1e-10)
        for name in ("x_p", "x_o", "x_s"):
            np.testing.assert_allclose(getattr(b, name), getattr(a, name), rtol=1e-10, atol=1e-10)

    def test_grid_refinement_monotone(self, rng):
        ds, _, fit = make(rng, n=10)
        coarse = sup_statistics(score_profile(ds, fit, make_grid((2, 3, 0.6))))
        fine = sup_statistics(score_profile(ds, fit, make_grid((4, 5, 0.6))))
        for name in ("s_o", "s_p", "s_s"):
            assert getattr(coarse, name) <= getattr(fine, name) + 1e-12

    def test_gaussian_two_observation_closed_form(self):
        X = np.ones((2, 1))
        Z = np.array([[1.0, 0.5], [1.0, -1.0]])
        ds = Dataset.from_arrays([0.3, 1.9], X, Z, [0, 0])
        fam = FamilySpec("gaussian")
        fit = fit_null(ds, fam)
        g = (0.8, 0.4)
        W = w_matrix_q2(g)
        phi = fit.phi_hat
        e = ds.y - fit.mu_hat
        b = Z[0] @ W @ Z[1]
        # sum over the two ordered pairs
        num = phi**2 * 2 * b * e[0] * e[1]
        den = math.sqrt(2 * 2 * b**2 * phi**2 * phi**2 * (1 / phi) ** 2)
        grid = NuisanceGrid((GammaPoint(*g),), None, W[None])
        assert score_profile(ds, fit, grid).x_p[0] == pytest.approx(num / den, rel=1e-12)


class TestStandardizeAndSup:
    def test_standardize_examples(self):
        x_p, _, _ = standardize(-2.0, 1.0, -1.0, 4.0, 1.0, 5.0)
        assert x_p == -1.0
        assert standardize(0.0, 1.0, 1.0, 4.0, 1.0, 5.0)[0] == 0.0
        assert standardize(1.0, 1.0, 2.0, 0.0, 1.0, 1.0)[0] == 0.0

    def _profile(self, x_p, x_o, x_s):
        pts = tuple(GammaPoint(float(k), 0.0) for k in range(len(x_p)))
        return SimpleNamespace(grid=SimpleNamespace(points=pts), x_p=np.array(x_p), x_o=np.array(x_o), x_s=np.array(x_s))

    def test_first_maximizer(self):
        s = sup_statistics(self._profile([0, 0, 0], [0, 0, 0], [-1.0, 2.0, 2.0]))
        assert s.s_s == 4.0
        assert s.argmax_s == GammaPoint(1.0, 0.0)

    def test_all_negative_truncates(self):
        s = sup_statistics(self._profile([-1.0, -3.0], [-0.1, -0.2], [-5.0, -0.5]))
        assert (s.s_o, s.s_p, s.s_s) == (0.0, 0.0, 0.0)
        assert s.argmax_p == GammaPoint(0.0, 0.0)

    def test_single_point(self):
        assert sup_statistics(self._profile([0.0], [1.5], [0.0])).s_o == 2.25

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
    def test_one_sided_sup_properties(self, xs):
        x = np.array(xs)
        s, k = one_sided_sup(x)
        assert s >= 0.0
        if np.all(x < 0):
            assert s == 0.0
        else:
            assert s == np.max(x[x >= 0]) ** 2
