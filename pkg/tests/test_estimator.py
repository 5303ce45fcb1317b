import math

import numpy as np
import pytest
from sklearn.base import clone

from vcscore.covparam import GammaPoint
from vcscore.errors import DataError, ParameterError
from vcscore.estimator import HomogeneityScoreTest, NullGLM
from vcscore.report import TestReport
from vcscore.simharness import SimConfig, simulate_dataset


@pytest.fixture
def arrays():
    ds = simulate_dataset(SimConfig(n=20, sigma1_sq=0.6), np.random.default_rng(3))
    return ds.X, ds.y, ds.Z, ds.groups


class TestNullGLM:
    def test_fit_predict(self, arrays):
        X, y, _, _ = arrays
        glm = NullGLM(family="bernoulli").fit(X, y)
        assert glm.coef_.shape == (3,)
        mu = glm.predict(X)
        assert np.all((mu > 0) & (mu < 1))
        # score equation: residuals orthogonal to X
        assert np.abs(X.T @ (y - mu)).max() < 1e-7

    def test_params_roundtrip(self):
        glm = NullGLM(family="binomial", trials=4)
        assert glm.get_params() == {"family": "binomial", "trials": 4}
        assert clone(glm).set_params(trials=2).trials == 2

    def test_feature_check(self, arrays):
        X, y, _, _ = arrays
        glm = NullGLM().fit(X, y)
        with pytest.raises(ValueError):
            glm.predict(X[:, :2])


class TestHomogeneityScoreTest:
    def test_fit_attributes(self, arrays):
        X, y, Z, groups = arrays
        est = HomogeneityScoreTest(grid="10,7,15/16", r0=99, random_state=4).fit(X, y, groups=groups, Z=Z)
        assert set(est.pvalues_) == {"S_O", "S_P", "S_S"}
        assert all(1 / 100 <= p <= 1 for p in est.pvalues_.values())
        assert len(est.profile_.grid) == 70
        assert est.replicates_.r0 == 99

    def test_random_state_required(self, arrays):
        X, y, Z, groups = arrays
        with pytest.raises(ParameterError, match="random_state"):
            HomogeneityScoreTest().fit(X, y, groups=groups, Z=Z)

    def test_clone_and_params(self):
        est = HomogeneityScoreTest(family="gaussian", r0=50, random_state=1)
        params = clone(est).get_params()
        assert params["family"] == "gaussian" and params["r0"] == 50

    def test_ignored_mode_uses_zero_correlation(self, arrays):
        X, y, Z, groups = arrays
        est = HomogeneityScoreTest(grid=(10, 7, 15 / 16), r0=20, random_state=1, correlation="ignored")
        est.fit(X, y, groups=groups, Z=Z)
        assert len(est.profile_.grid) == 10

    def test_inconsistent_lengths(self, arrays):
        X, y, Z, groups = arrays
        with pytest.raises(DataError):
            HomogeneityScoreTest(random_state=1).fit(X, y[:-1], groups=groups, Z=Z)

    def test_wrong_z_width(self, arrays):
        X, y, Z, groups = arrays
        with pytest.raises(ParameterError, match="random-effect"):
            HomogeneityScoreTest(grid=(2, 1, 0.5), random_state=1).fit(X, y, groups=groups, Z=Z[:, :1])

    def test_single_point_grid_is_pointwise_square(self, arrays):
        X, y, Z, groups = arrays
        est = HomogeneityScoreTest(grid=(1, 1, 0.5), r0=10, random_state=1).fit(X, y, groups=groups, Z=Z)
        pr = est.profile_
        for name in ("o", "p", "s"):
            x = float(getattr(pr, f"x_{name}")[0])
            assert getattr(est.statistics_, f"s_{name}") == max(x, 0.0) ** 2
        assert est.statistics_.argmax_s == GammaPoint(math.pi, 0.0)


class TestReportSerialization:
    def test_roundtrip(self, arrays):
        X, y, Z, groups = arrays
        est = HomogeneityScoreTest(grid=(4, 3, 0.5), r0=30, random_state=2).fit(X, y, groups=groups, Z=Z)
        report = est.report()
        again = TestReport.from_json(report.to_json())
        assert again == report
        assert again.to_json() == report.to_json()

    def test_gaussian_reports_residual_variance(self, arrays):
        X, _, Z, groups = arrays
        y = X @ np.ones(3) + np.random.default_rng(0).standard_normal(X.shape[0]) * 2.0
        est = HomogeneityScoreTest(family="gaussian", grid=(2, 1, 0.5), r0=10, random_state=2)
        report = est.fit(X, y, groups=groups, Z=Z).report()
        assert report.sigma2_hat == pytest.approx(1 / report.phi_hat)
        assert report.trials is None

    def test_key_order_stable(self, arrays):
        X, y, Z, groups = arrays
        est = HomogeneityScoreTest(grid=(2, 1, 0.5), r0=10, random_state=2).fit(X, y, groups=groups, Z=Z)
        keys = list(est.report().to_dict())
        assert keys[:4] == ["family", "trials", "n", "N"]
        assert keys[-1] == "rejected"
