"""IMU/encoder simulation and the tilt-estimation pipeline."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rwusim.dynamics3d import (
    FullState,
    body_kinematics,
    forward_dynamics,
    gravity_tilt_frame,
)
from rwusim.estimation import (
    CoplanarImuError,
    EstimatorState,
    WheelAccelFilter,
    accel_tilt,
    calibrate_bias,
    complementary_fuse,
    estimator_step,
    fusion_cutoff_hz,
    gyro_euler_rates,
    integrate_gyro,
    make_estimator,
    pivot_acceleration,
    precompute_ls_weights,
    tilt_rotation,
    wheel_accel_filter,
)
from rwusim.params import default_params
from rwusim.sensors import (
    DEG,
    EncoderConfig,
    EncoderReading,
    ImuConfig,
    SensorConfigError,
    imu_specific_forces,
    location_matrix,
    simulate_encoders,
    simulate_imu_array,
)


@pytest.fixture(scope="module")
def params():
    return default_params()


@pytest.fixture(scope="module")
def cfg(params):
    return ImuConfig.default(params)


@pytest.fixture(scope="module")
def quiet_cfg(params):
    return ImuConfig.default(params, accel_sigma=0.0, gyro_sigma=0.0)


def static_frame(q1, q2, cfg, pivot=None):
    """Noise-free frame for a motionless pose, optional pivot accel."""
    acc = np.zeros(3) if pivot is None else np.asarray(pivot, float)
    m = imu_specific_forces(acc, np.zeros(3), np.zeros(3), q1, q2, cfg)
    from rwusim.sensors import ImuFrame
    sens = np.array([cfg.mount_rotations[i].T @ m[i] for i in range(4)])
    return ImuFrame(accel_meas=sens, gyro_meas=np.zeros((4, 3)))


class TestImuConfig:
    def test_default_rank_four(self, cfg):
        P = location_matrix(cfg.positions)
        assert P.shape == (4, 4)
        assert np.linalg.matrix_rank(P) == 4

    def test_coplanar_rejected(self, params):
        flat = np.array([[0.1, 0.1, 0.05], [0.1, -0.1, 0.05],
                         [-0.1, 0.1, 0.05], [-0.1, -0.1, 0.05]])
        with pytest.raises(SensorConfigError, match="coplanar"):
            ImuConfig(positions=flat,
                      mount_rotations=np.broadcast_to(np.eye(3), (4, 3, 3)))

    def test_bad_shapes_and_ranges(self):
        good = ImuConfig.default()
        with pytest.raises(SensorConfigError):
            ImuConfig(positions=good.positions[:3],
                      mount_rotations=good.mount_rotations[:3])
        with pytest.raises(SensorConfigError):
            ImuConfig(positions=good.positions,
                      mount_rotations=good.mount_rotations, accel_range=-1.0)
        with pytest.raises(SensorConfigError):
            ImuConfig(positions=good.positions,
                      mount_rotations=good.mount_rotations, gyro_sigma=-0.1)
        bad_mounts = good.mount_rotations.copy()
        bad_mounts[2, 0, 0] = 2.0
        with pytest.raises(SensorConfigError, match="orthonormal"):
            ImuConfig(positions=good.positions, mount_rotations=bad_mounts)

    def test_default_ranges(self, cfg, params):
        assert cfg.accel_range == pytest.approx(2.0 * params.g0)
        assert cfg.gyro_range == pytest.approx(500.0 * DEG)


class TestSimulateImu:
    def test_static_upright_reads_minus_g(self, quiet_cfg, params):
        rng = np.random.default_rng(0)
        frame = simulate_imu_array(FullState.upright(), np.zeros(5),
                                   quiet_cfg, rng)
        for i in range(4):
            assert np.allclose(frame.accel_meas[i], [0, 0, -params.g0],
                               atol=1e-9)
            assert np.allclose(frame.gyro_meas[i], 0.0, atol=1e-12)

    def test_free_fall_reads_zero(self, quiet_cfg, params):
        g_B = gravity_tilt_frame(0.3, -0.2, params.g0)
        m = imu_specific_forces(g_B, np.zeros(3), np.zeros(3), 0.3, -0.2,
                                quiet_cfg)
        assert np.max(np.abs(m)) < 1e-12

    def test_static_tilt_round_trip(self, quiet_cfg):
        q1 = 30.0 * DEG
        st = FullState([q1, 0, 0, 0, 0], np.zeros(5), np.zeros(2))
        rng = np.random.default_rng(0)
        frame = simulate_imu_array(st, np.zeros(5), quiet_cfg, rng)
        w = precompute_ls_weights(quiet_cfg.positions)
        q1A, q2A, _, _ = accel_tilt(frame, np.zeros(3), w, quiet_cfg)
        assert q1A == pytest.approx(q1, abs=1e-12)
        assert q2A == pytest.approx(0.0, abs=1e-12)

    def test_saturation_clamps_to_boundary(self, params):
        c = ImuConfig.default(params, accel_sigma=0.0, gyro_sigma=0.0,
                              accel_range=5.0)
        rng = np.random.default_rng(0)
        frame = simulate_imu_array(FullState.upright(), np.zeros(5), c, rng)
        assert np.all(frame.accel_meas[:, 2] == -5.0)

    def test_gyro_saturation(self, params):
        c = ImuConfig.default(params, accel_sigma=0.0, gyro_sigma=0.0)
        st = FullState(np.zeros(5), [20.0, 0, 0, 0, 0], np.zeros(2))
        rng = np.random.default_rng(0)
        frame = simulate_imu_array(st, np.zeros(5), c, rng)
        assert np.all(frame.gyro_meas[:, 0] == c.gyro_range)

    def test_noise_reproducible(self, cfg):
        st = FullState([0.1, -0.05, 0.2, 1.0, 3.0],
                       [0.3, 0.2, 0.1, 2.0, 10.0], np.zeros(2))
        qdd = np.zeros(5)
        f1 = [simulate_imu_array(st, qdd, cfg, np.random.default_rng(42))
              for _ in range(1)][0]
        f2 = simulate_imu_array(st, qdd, cfg, np.random.default_rng(42))
        f3 = simulate_imu_array(st, qdd, cfg, np.random.default_rng(43))
        assert np.array_equal(f1.accel_meas, f2.accel_meas)
        assert np.array_equal(f1.gyro_meas, f2.gyro_meas)
        assert not np.array_equal(f1.accel_meas, f3.accel_meas)

    def test_moving_state_adjointness(self, params):
        # noiseless generator then least squares returns the true
        # gravity direction and angular operator; ranges opened up so
        # clipping cannot bend fast states
        wide = ImuConfig.default(params, accel_sigma=0.0, gyro_sigma=0.0,
                                 accel_range=1e6, gyro_range=1e6)
        rng = np.random.default_rng(3)
        w = precompute_ls_weights(wide.positions)
        for _ in range(6):
            q = rng.uniform(-0.8, 0.8, 5)
            dq = rng.uniform(-4, 4, 5)
            st = FullState(q, dq, np.zeros(2))
            u = rng.uniform(-1, 1, 2)
            qdd = forward_dynamics(st, u, params)
            frame = simulate_imu_array(st, qdd, wide,
                                       np.random.default_rng(0))
            bk = body_kinematics(st, qdd, params)
            _, _, g_hat, Om_hat = accel_tilt(frame, bk.acc_wheel_center_B,
                                             w, wide)
            g_true = gravity_tilt_frame(q[0], q[1], params.g0)

            def sk(v):
                return np.array([[0, -v[2], v[1]],
                                 [v[2], 0, -v[0]],
                                 [-v[1], v[0], 0]])

            Om_true = sk(bk.omegadot_B) + sk(bk.omega_B) @ sk(bk.omega_B)
            assert np.max(np.abs(g_hat - g_true)) < 1e-10
            assert np.max(np.abs(Om_hat - Om_true)) < 1e-10

    def test_rotated_mounts_round_trip(self, params):
        Rz = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        base = ImuConfig.default(params)
        mounts = base.mount_rotations.copy()
        mounts[0] = Rz
        mounts[3] = Rz.T
        c = ImuConfig(positions=base.positions, mount_rotations=mounts,
                      accel_sigma=0.0, gyro_sigma=0.0, robot=params)
        st = FullState([0.2, 0.1, 0, 0, 0], np.zeros(5), np.zeros(2))
        frame = simulate_imu_array(st, np.zeros(5), c,
                                   np.random.default_rng(0))
        w = precompute_ls_weights(c.positions)
        q1A, q2A, _, _ = accel_tilt(frame, np.zeros(3), w, c)
        assert q1A == pytest.approx(0.2, abs=1e-12)
        assert q2A == pytest.approx(0.1, abs=1e-12)


class TestEncoders:
    def test_relative_rates(self):
        c = EncoderConfig()
        st = FullState(np.zeros(5), [0.0, 0.1, 0.0, 10.0, 0.0], np.zeros(2))
        r = simulate_encoders(st, c)
        assert r.dq4E == pytest.approx(9.9, abs=c.quantum / c.sample_dt)

    def test_two_count_angle(self):
        c = EncoderConfig(counts_per_rev=4096)
        ang = 2.0 * math.pi / 4096
        st = FullState([0, 0, 0, ang, 0], np.zeros(5), np.zeros(2))
        r = simulate_encoders(st, c)
        assert r.q4E == 2.0 * c.quantum

    def test_stationary_silent(self):
        c = EncoderConfig()
        st = FullState([0.3, -0.2, 1.0, 5.0, -7.0], np.zeros(5), np.zeros(2))
        r = simulate_encoders(st, c)
        assert r.dq4E == 0.0 and r.dq5E == 0.0
        assert r.q4E == pytest.approx(5.0 - (-0.2), abs=c.quantum / 2)

    def test_reaction_wheel_channel(self):
        c = EncoderConfig(counts_per_rev=1 << 22)  # fine grid isolates rate
        st = FullState([0.5, 0, 0, 0, 2.0], [1.5, 0, 0, 0, 30.0], np.zeros(2))
        r = simulate_encoders(st, c)
        assert r.q5E == pytest.approx(1.5, abs=1e-5)
        assert r.dq5E == pytest.approx(28.5, abs=1e-3)

    @given(rel=st.floats(-50, 50), rate=st.floats(-100, 100))
    @settings(max_examples=60, deadline=None)
    def test_quantization_bounds(self, rel, rate):
        c = EncoderConfig()
        s = FullState([0, 0, 0, rel, 0], [0, 0.0, 0, rate, 0], np.zeros(2))
        r = simulate_encoders(s, c)
        assert abs(r.q4E - rel) <= c.quantum / 2 + 1e-12
        assert abs(r.dq4E - rate) <= c.quantum / c.sample_dt + 1e-9

    def test_bad_config(self):
        with pytest.raises(SensorConfigError):
            EncoderConfig(counts_per_rev=0)
        with pytest.raises(SensorConfigError):
            EncoderConfig(sample_dt=0.0)


class TestLsWeights:
    def test_right_inverse(self, cfg):
        w = precompute_ls_weights(cfg.positions)
        P = location_matrix(cfg.positions)
        X = np.column_stack([w.X1star, w.X2star])
        assert np.max(np.abs(P @ X - np.eye(4))) < 1e-12

    def test_coplanar_rejected(self):
        flat = np.array([[1.0, 0, 0.2], [0, 1.0, 0.2],
                         [-1.0, 0, 0.2], [0, -1.0, 0.2]])
        with pytest.raises(CoplanarImuError, match="coplanar"):
            precompute_ls_weights(flat)

    def test_position_scaling(self, cfg):
        w1 = precompute_ls_weights(cfg.positions)
        w2 = precompute_ls_weights(2.0 * cfg.positions)
        assert np.allclose(w2.X1star, w1.X1star, atol=1e-12)
        assert np.allclose(w2.X2star, 0.5 * w1.X2star, atol=1e-12)

    def test_least_squares_optimality(self, cfg):
        rng = np.random.default_rng(9)
        P = location_matrix(cfg.positions)
        M = rng.normal(0.0, 3.0, (3, 4))
        X = np.column_stack(
            [precompute_ls_weights(cfg.positions).X1star,
             precompute_ls_weights(cfg.positions).X2star])
        Q_hat = M @ X
        best = np.linalg.norm(M - Q_hat @ P)
        for _ in range(200):
            Q = Q_hat + rng.normal(0.0, 0.5, (3, 4))
            assert np.linalg.norm(M - Q @ P) >= best - 1e-12


class TestGyroEulerRates:
    def test_identity_at_zero_tilt(self):
        w = np.array([0.3, -0.2, 0.5])
        rates = gyro_euler_rates(np.tile(w, (4, 1)), 0.0, 0.0)
        assert np.allclose(rates, w, atol=1e-15)

    def test_averaging(self):
        rng = np.random.default_rng(1)
        readings = rng.normal(0, 1, (4, 3))
        mean = readings.mean(axis=0)
        got = gyro_euler_rates(readings, 0.1, -0.2)
        want = gyro_euler_rates(np.tile(mean, (4, 1)), 0.1, -0.2)
        assert np.allclose(got, want, atol=1e-15)

    def test_pure_roll_rate(self):
        rates = gyro_euler_rates(np.tile([0.7, 0, 0], (4, 1)), 0.0, 0.0)
        assert np.allclose(rates, [0.7, 0, 0], atol=1e-15)

    def test_exact_map_inverts_kinematics(self):
        from rwusim.dynamics3d import _omega_body
        q1, q2 = 0.4, -0.3
        dq = np.array([0.5, -0.8, 0.6, 0, 0])
        w = np.array(_omega_body(q1, q2, dq))
        rec = gyro_euler_rates(np.tile(w, (4, 1)), q1, q2, exact=True)
        assert np.allclose(rec, dq[:3], atol=1e-12)

    def test_published_form_error_terms(self):
        # reduced map keeps the roll row exact, couples sin(q1) into
        # the other two rows
        from rwusim.dynamics3d import _omega_body
        q1, q2 = 0.3, -0.25
        dq = np.array([0.5, -0.8, 0.6, 0, 0])
        w = np.array(_omega_body(q1, q2, dq))
        red = gyro_euler_rates(np.tile(w, (4, 1)), q1, q2)
        s1 = math.sin(q1)
        assert red[0] == pytest.approx(dq[0], abs=1e-12)
        assert red[1] == pytest.approx(dq[1] + s1 * dq[2], abs=1e-12)
        assert red[2] == pytest.approx(dq[2] + s1 * dq[1], abs=1e-12)

    def test_exact_map_singular_at_side(self):
        with pytest.raises(ValueError, match="singular"):
            gyro_euler_rates(np.zeros((4, 3)), math.pi / 2, 0.0, exact=True)


class TestWheelAccelFilter:
    def test_constant_input_zero(self):
        f = WheelAccelFilter()
        outs = [f.update(7.3) for _ in range(50)]
        assert all(abs(o) < 1e-12 for o in outs)

    def test_ramp_tracks_slope(self):
        f = WheelAccelFilter(cutoff_hz=10.0, Ts=0.01)
        a = 4.0
        out = 0.0
        for k in range(200):
            out = f.update(a * k * 0.01)
        assert out == pytest.approx(a, rel=0.02)

    def test_single_sample_warming_up(self):
        f = WheelAccelFilter()
        assert f.update(3.0) == 0.0
        assert f.warming_up

    def test_functional_wrapper(self):
        hist = [0.1 * k * k for k in range(30)]
        f = WheelAccelFilter(cutoff_hz=8.0, Ts=0.01)
        last = 0.0
        for v in hist:
            last = f.update(v)
        assert wheel_accel_filter(hist, cutoff_hz=8.0, Ts=0.01) == last


class TestPivotAcceleration:
    def test_zero_tilt_substitution(self, params):
        pa = pivot_acceleration(10.0, 0.0, 0.0, params)
        assert np.allclose(pa, [1.06, 0.0, 0.0], atol=1e-12)

    def test_zero_accel(self, params):
        assert np.allclose(pivot_acceleration(0.0, 0.5, -0.3, params), 0.0)

    def test_rotation_action(self, params):
        # the retained term lies along the roll axis, so roll leaves it
        # in place while a quarter pitch turns it onto body z
        pa_roll = pivot_acceleration(10.0, math.pi / 2, 0.0, params)
        assert np.allclose(pa_roll, [1.06, 0.0, 0.0], atol=1e-12)
        pa_pitch = pivot_acceleration(10.0, 0.0, math.pi / 2, params)
        assert np.allclose(pa_pitch, [0.0, 0.0, 1.06], atol=1e-12)
        assert np.linalg.norm(pa_pitch) == pytest.approx(1.06, abs=1e-12)

    def test_tilt_rotation_matches_attitude_with_no_yaw(self):
        from rwusim.dynamics3d import rotation_body_from_inertial
        q1, q2 = 0.37, -0.55
        assert np.allclose(tilt_rotation(q1, q2),
                           rotation_body_from_inertial(q1, q2, 0.0),
                           atol=1e-14)


class TestAccelTilt:
    def test_exactness_sample(self, quiet_cfg):
        w = precompute_ls_weights(quiet_cfg.positions)
        frame = static_frame(20 * DEG, -10 * DEG, quiet_cfg)
        q1A, q2A, _, _ = accel_tilt(frame, np.zeros(3), w, quiet_cfg)
        assert q1A == pytest.approx(20 * DEG, abs=1e-9)
        assert q2A == pytest.approx(-10 * DEG, abs=1e-9)

    @given(q1=st.floats(-79 * DEG, 79 * DEG),
           q2=st.floats(-79 * DEG, 79 * DEG))
    @settings(max_examples=80, deadline=None)
    def test_exactness_sweep(self, q1, q2):
        c = ImuConfig.default(accel_sigma=0.0, gyro_sigma=0.0)
        w = precompute_ls_weights(c.positions)
        frame = static_frame(q1, q2, c)
        q1A, q2A, _, _ = accel_tilt(frame, np.zeros(3), w, c)
        assert q1A == pytest.approx(q1, abs=1e-9)
        assert q2A == pytest.approx(q2, abs=1e-9)

    def test_pitch_continuity_at_zero(self, quiet_cfg):
        w = precompute_ls_weights(quiet_cfg.positions)
        eps = 1e-3
        _, hi, _, _ = accel_tilt(static_frame(0.0, eps, quiet_cfg),
                                 np.zeros(3), w, quiet_cfg)
        _, lo, _, _ = accel_tilt(static_frame(0.0, -eps, quiet_cfg),
                                 np.zeros(3), w, quiet_cfg)
        assert hi == pytest.approx(eps, abs=1e-9)
        assert lo == pytest.approx(-eps, abs=1e-9)

    def test_degenerate_gravity_rejected(self, quiet_cfg):
        from rwusim.sensors import ImuFrame
        w = precompute_ls_weights(quiet_cfg.positions)
        frame = ImuFrame(accel_meas=np.full((4, 3), 1e-4),
                         gyro_meas=np.zeros((4, 3)))
        with pytest.raises(ValueError, match="degenerate"):
            accel_tilt(frame, np.zeros(3), w, quiet_cfg)

    def test_translational_push_compensation(self, quiet_cfg, params):
        # pure forward acceleration at zero tilt: compensation keeps the
        # pitch estimate at zero, skipping it biases the estimate
        a = 1.5
        w = precompute_ls_weights(quiet_cfg.positions)
        frame = static_frame(0.0, 0.0, quiet_cfg, pivot=[a, 0.0, 0.0])
        _, q2_on, _, _ = accel_tilt(frame, np.array([a, 0.0, 0.0]), w,
                                    quiet_cfg)
        _, q2_off, _, _ = accel_tilt(frame, np.zeros(3), w, quiet_cfg)
        assert abs(q2_on) < 1e-12
        assert q2_off == pytest.approx(math.atan2(a, params.g0), abs=1e-9)


class TestComplementaryFuse:
    def test_fixed_point(self, quiet_cfg):
        est = make_estimator(quiet_cfg)
        est.q1_hat, est.q2_hat = 0.3, -0.1
        q1, q2 = complementary_fuse(est, 0.3, -0.1, est.Ts)
        assert q1 == pytest.approx(0.3, abs=1e-15)
        assert q2 == pytest.approx(-0.1, abs=1e-15)

    def test_accel_only_alpha_one(self, quiet_cfg):
        est = make_estimator(quiet_cfg, alpha=1.0)
        est.q1_hat = 0.5
        q1, _ = complementary_fuse(est, 0.12, 0.0, est.Ts)
        assert q1 == 0.12

    def test_convergence_time_constant(self, quiet_cfg):
        est = make_estimator(quiet_cfg)
        c = 1.0
        for _ in range(49):
            complementary_fuse(est, c, 0.0, est.Ts)
        # one continuous-equivalent time constant is just under 50 ticks
        assert est.q1_hat == pytest.approx(1.0 - math.exp(-1.0), abs=0.01)

    def test_cutoff_frequency(self):
        assert abs(fusion_cutoff_hz(0.02, 0.01) - 0.32) <= 0.01

    def test_gyro_bias_is_high_passed(self, quiet_cfg):
        # a rate bias shifts the fused estimate by a bounded offset
        # instead of the unbounded ramp the raw integral shows
        est = make_estimator(quiet_cfg)
        b = 0.01
        for _ in range(3000):
            est.euler_rates_G = np.array([b, 0.0, 0.0])
            integrate_gyro(est, est.euler_rates_G, est.Ts)
            complementary_fuse(est, 0.0, 0.0, est.Ts)
        expected_offset = (1 - est.alpha) / est.alpha * est.Ts * b
        assert est.q1_hat == pytest.approx(expected_offset, rel=0.02)
        assert est.q1G == pytest.approx(b * 30.0, rel=1e-6)

    def test_alpha_validation(self, quiet_cfg):
        with pytest.raises(ValueError):
            make_estimator(quiet_cfg, alpha=0.0)
        with pytest.raises(ValueError):
            make_estimator(quiet_cfg, alpha=1.5)
        with pytest.raises(ValueError):
            fusion_cutoff_hz(1.0, 0.01)


class TestCalibrateBias:
    def test_noiseless_upright(self, quiet_cfg):
        w = precompute_ls_weights(quiet_cfg.positions)
        frames = [static_frame(0.0, 0.0, quiet_cfg) for _ in range(10)]
        q1b, q2b = calibrate_bias(frames, w, quiet_cfg)
        assert abs(q1b) < 1e-12 and abs(q2b) < 1e-12

    def test_noisy_tilt_mean(self, params):
        c = ImuConfig.default(params)
        w = precompute_ls_weights(c.positions)
        rng = np.random.default_rng(11)
        st = FullState([1 * DEG, 2 * DEG, 0, 0, 0], np.zeros(5), np.zeros(2))
        frames = [simulate_imu_array(st, np.zeros(5), c, rng)
                  for _ in range(300)]
        q1b, q2b = calibrate_bias(frames, w, c, rate_threshold=0.5)
        singles = [accel_tilt(f, np.zeros(3), w, c)[:2] for f in frames]
        s1 = np.std([s[0] for s in singles])
        s2 = np.std([s[1] for s in singles])
        assert abs(q1b - 1 * DEG) < 3.5 * s1 / math.sqrt(300)
        assert abs(q2b - 2 * DEG) < 3.5 * s2 / math.sqrt(300)

    def test_moving_capture_rejected(self, quiet_cfg):
        from rwusim.sensors import ImuFrame
        w = precompute_ls_weights(quiet_cfg.positions)
        frames = []
        for k in range(20):
            f = static_frame(0.0, 0.0, quiet_cfg)
            frames.append(ImuFrame(accel_meas=f.accel_meas,
                                   gyro_meas=np.full((4, 3), 0.02 * k)))
        with pytest.raises(ValueError, match="not static"):
            calibrate_bias(frames, w, quiet_cfg)

    def test_empty_rejected(self, quiet_cfg):
        w = precompute_ls_weights(quiet_cfg.positions)
        with pytest.raises(ValueError, match="at least one"):
            calibrate_bias([], w, quiet_cfg)


class TestEstimatorStep:
    def run_static(self, est, q1, q2, n, cfg):
        enc = EncoderReading(0.0, 0.0, 0.0, 0.0)
        frame = static_frame(q1, q2, cfg)
        for _ in range(n):
            estimator_step(frame, enc, est)
        return est

    def test_static_convergence(self, quiet_cfg):
        q1, q2 = 3 * DEG, -2 * DEG
        est = make_estimator(quiet_cfg)
        self.run_static(est, q1, q2, 300, quiet_cfg)
        # five low-pass time constants comfortably inside 300 ticks
        assert est.q1_hat == pytest.approx(q1, abs=0.05 * DEG)
        assert est.q2_hat == pytest.approx(q2, abs=0.05 * DEG)
        assert est.q1A == pytest.approx(q1, abs=1e-9)
        assert abs(est.q1G) < 1e-12  # gyros silent, integral stays put

    def test_gyro_bias_linear_drift(self, quiet_cfg):
        from rwusim.sensors import ImuFrame
        est = make_estimator(quiet_cfg)
        b = 0.005
        frame0 = static_frame(0.0, 0.0, quiet_cfg)
        biased = ImuFrame(accel_meas=frame0.accel_meas,
                          gyro_meas=np.full((4, 3), 0.0) + np.array([b, 0, 0]))
        enc = EncoderReading(0.0, 0.0, 0.0, 0.0)
        for _ in range(500):
            estimator_step(biased, enc, est)
        assert est.q1G == pytest.approx(b * 5.0, rel=1e-3)

    def test_pivot_modes_differ_under_drive_transient(self, quiet_cfg):
        # spin-up transient: compensation keeps pitch near zero
        on = make_estimator(quiet_cfg, pivot_mode="retained")
        off = make_estimator(quiet_cfg, pivot_mode="off")
        rw = quiet_cfg.robot.wheel_radius
        accel = 30.0  # rad/s^2 drive spin-up
        for k in range(120):
            rate = accel * k * 0.01
            pa = np.array([rw * accel, 0.0, 0.0])
            frame = static_frame(0.0, 0.0, quiet_cfg, pivot=pa)
            enc = EncoderReading(0.0, 0.0, rate, 0.0)
            estimator_step(frame, enc, on)
            estimator_step(frame, enc, off)
        assert abs(np.degrees(on.q2A)) < 0.5
        assert abs(np.degrees(off.q2A)) > 2.0
        assert abs(on.q2_hat) < abs(off.q2_hat)

    def test_full_mode_matches_retained_for_pure_drive(self, quiet_cfg):
        full = make_estimator(quiet_cfg, pivot_mode="full")
        ret = make_estimator(quiet_cfg, pivot_mode="retained")
        for k in range(60):
            rate = 10.0 * k * 0.01
            frame = static_frame(0.0, 0.0, quiet_cfg,
                                 pivot=[quiet_cfg.robot.wheel_radius * 10.0,
                                        0.0, 0.0])
            enc = EncoderReading(0.0, 0.0, rate, 0.0)
            estimator_step(frame, enc, full)
            estimator_step(frame, enc, ret)
        # with no tilt rates the extra terms vanish
        assert full.q2_hat == pytest.approx(ret.q2_hat, abs=1e-9)
