import numpy as np
import pytest

from conftest import write_linear_file
from reachmon import get_spec, load_linear_system
from reachmon.data import gen_independent
from reachmon.errors import ShapeError
from reachmon.systems import HybridState, observe, simulate
from reachmon.ukf import UKFConfig, relative_error, ukf_estimate


class TestUkf:
    def test_linear_noiseless_convergence(self, tmp_path):
        # harmonic oscillator, position observed, no noise: estimates lock
        # onto the closed-form trajectory within ten updates
        path = write_linear_file(tmp_path / "osc.txt", dim=2,
                                 a=[[0.0, 1.0], [-1.0, 0.0]], obs=(0,),
                                 unsafe=(0, "le", -10.0), hp=14, hf=1,
                                 dt=0.1, noise=(0.0,),
                                 init=[(-1.0, 1.0), (-1.0, 1.0)])
        spec = load_linear_system(path)
        truth = simulate(spec, HybridState([0.4, -0.3]), 14)
        obs_seq = np.array([s.v[:1] for s in truth.states])
        est = ukf_estimate(spec, obs_seq, UKFConfig(process_noise=1e-10))
        err = np.abs(est[10:, 0] - np.array([s.v[0] for s in truth.states[10:]]))
        assert err.max() < 1e-3

    def test_identity_observation_tracks_levels(self, twt_spec):
        spec = twt_spec
        rng = np.random.default_rng(0)
        ds = gen_independent(spec, 30, seed=0)
        cfg = UKFConfig()
        for i in range(10):
            est = ukf_estimate(spec, ds.obs[i].astype(np.float64), cfg)
            err = np.abs(est - ds.states[i].astype(np.float64))
            assert err.max() < 3.0 * spec.noise_std.max() + 0.05

    def test_deterministic(self, twt_spec):
        ds = gen_independent(twt_spec, 2, seed=1)
        a = ukf_estimate(twt_spec, ds.obs[0].astype(np.float64))
        b = ukf_estimate(twt_spec, ds.obs[0].astype(np.float64))
        assert np.array_equal(a, b)

    def test_shape_validation(self, twt_spec):
        with pytest.raises(ShapeError):
            ukf_estimate(twt_spec, np.zeros((2, 5)))

    def test_runs_through_sn_jump(self):
        # sigma points pass through the reset logic without diverging
        spec = get_spec("sn")
        rng = np.random.default_rng(3)
        s = HybridState([29.5, 10.0])
        traj = simulate(spec, s, spec.past_horizon)
        obs_seq = np.array([observe(spec, st, rng) for st in traj.states])
        est = ukf_estimate(spec, obs_seq)
        assert np.isfinite(est).all()


class TestRelativeError:
    def test_zero_for_equal(self):
        x = np.random.default_rng(0).normal(size=(5, 3))
        assert relative_error(x, x, np.ones(3)) == 0.0

    def test_constant_offset_closed_form(self):
        # offset of one full range unit on one dimension over L steps:
        # norm = range * sqrt(L), denominator = max range
        L = 6
        true = np.zeros((L, 2))
        est = true.copy()
        ranges = np.array([2.0, 5.0])
        est[:, 0] += ranges[0]
        want = ranges[0] * np.sqrt(L) / ranges.max()
        assert relative_error(true, est, ranges) == pytest.approx(want)

    def test_zero_range_dimension_excluded(self):
        true = np.zeros((4, 2))
        est = np.ones((4, 2))
        with pytest.warns(UserWarning):
            v = relative_error(true, est, np.array([0.0, 2.0]))
        assert v == pytest.approx(np.sqrt(4.0) / 2.0)

    def test_nonnegative_and_definite(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a = rng.normal(size=(3, 2))
            b = rng.normal(size=(3, 2))
            r = relative_error(a, b, np.array([1.0, 1.0]))
            assert r >= 0.0
            assert (r == 0.0) == np.array_equal(a, b)
