import numpy as np
import pytest

from riscade import (
    CascadedChannel,
    ChannelConfig,
    PathSet,
    assemble_h1,
    assemble_h2,
    cascade,
    draw_cascaded,
    draw_paths,
    steering_vector,
    unvectorize,
)


class TestChannelConfig:
    def test_valid(self):
        cfg = ChannelConfig(n_bs=8, n_ris=16, n_paths_ris_bs=3, n_paths_ms_ris=2)
        assert cfg.angle_sine_range == (0.0, 1.0)

    def test_path_bounds(self):
        with pytest.raises(ValueError):
            ChannelConfig(n_bs=4, n_ris=16, n_paths_ris_bs=5)
        with pytest.raises(ValueError):
            ChannelConfig(n_bs=4, n_ris=3, n_paths_ms_ris=4)

    @pytest.mark.parametrize("rng", [(-1.5, 0.0), (0.0, 1.2), (0.5, 0.4)])
    def test_bad_sine_range(self, rng):
        with pytest.raises(ValueError):
            ChannelConfig(n_bs=2, n_ris=2, angle_sine_range=rng)

    def test_negative_variance(self):
        with pytest.raises(ValueError):
            ChannelConfig(n_bs=2, n_ris=2, var_los=0.0)
        with pytest.raises(ValueError):
            ChannelConfig(n_bs=2, n_ris=2, var_nlos=-0.1)


class TestSteeringVector:
    def test_zero_phase(self):
        assert np.allclose(steering_vector(0.0, 4), np.ones(4), atol=0)

    def test_half_turn(self):
        np.testing.assert_allclose(steering_vector(1.0, 2), [1.0, -1.0], atol=1e-15)

    def test_quarter_turns(self):
        np.testing.assert_allclose(
            steering_vector(0.5, 4), [1.0, 1.0j, -1.0, -1.0j], atol=1e-15
        )

    @pytest.mark.parametrize("sine", [-1.0, -0.37, 0.0, 0.61, 1.0])
    def test_unit_modulus(self, sine):
        v = steering_vector(sine, 33)
        assert np.max(np.abs(np.abs(v) - 1.0)) < 1e-15
        assert v[0] == 1.0 + 0.0j


class TestDrawPaths:
    CFG = ChannelConfig(n_bs=8, n_ris=16, n_paths_ris_bs=3, n_paths_ms_ris=2)

    def test_zero_nlos_variance_degenerate(self):
        cfg = ChannelConfig(n_bs=8, n_ris=16, n_paths_ris_bs=3, var_nlos=0.0)
        paths = draw_paths(cfg, 1, np.random.default_rng(0))
        assert np.all(paths.gains[1:] == 0.0)
        assert paths.gains[0] != 0.0

    def test_determinism(self):
        a = draw_paths(self.CFG, 1, np.random.default_rng(123))
        b = draw_paths(self.CFG, 1, np.random.default_rng(123))
        assert np.array_equal(a.gains, b.gains)
        assert np.array_equal(a.aoa_sines, b.aoa_sines)
        assert np.array_equal(a.aod_sines, b.aod_sines)

    def test_hop_shapes(self):
        p1 = draw_paths(self.CFG, 1, np.random.default_rng(5))
        assert len(p1.gains) == len(p1.aoa_sines) == len(p1.aod_sines) == 3
        p2 = draw_paths(self.CFG, 2, np.random.default_rng(5))
        assert len(p2.gains) == len(p2.aoa_sines) == 2
        assert p2.aod_sines.size == 0

    def test_bad_hop(self):
        with pytest.raises(ValueError):
            draw_paths(self.CFG, 3, np.random.default_rng(0))

    def test_los_gain_variance_monte_carlo(self):
        # 1e5 draws; sample mean of |g|^2 concentrates within 5% of var_los = 1
        cfg = ChannelConfig(n_bs=2, n_ris=2)
        rng = np.random.default_rng(2024)
        draws = np.array(
            [draw_paths(cfg, 2, rng).gains[0] for _ in range(100_000)]
        )
        assert abs(np.mean(np.abs(draws) ** 2) - 1.0) < 0.05

    def test_sines_within_range(self):
        cfg = ChannelConfig(
            n_bs=8, n_ris=16, n_paths_ris_bs=3, angle_sine_range=(-0.25, 0.5)
        )
        rng = np.random.default_rng(77)
        for _ in range(200):
            p = draw_paths(cfg, 1, rng)
            assert np.all(p.aoa_sines >= -0.25) and np.all(p.aoa_sines <= 0.5)
            assert np.all(p.aod_sines >= -0.25) and np.all(p.aod_sines <= 0.5)


class TestAssemble:
    def test_h1_all_ones(self):
        paths = PathSet(
            gains=np.array([1.0 + 0j]),
            aoa_sines=np.zeros(1),
            aod_sines=np.zeros(1),
        )
        h1 = assemble_h1(paths, 3, 5)
        np.testing.assert_allclose(h1, np.ones((3, 5)), atol=1e-15)

    def test_h1_sum_form_agrees(self):
        rng = np.random.default_rng(11)
        cfg = ChannelConfig(n_bs=6, n_ris=9, n_paths_ris_bs=3)
        paths = draw_paths(cfg, 1, rng)
        h1 = assemble_h1(paths, 6, 9)
        by_sum = np.zeros((6, 9), dtype=complex)
        for g, aoa, aod in zip(paths.gains, paths.aoa_sines, paths.aod_sines):
            by_sum += g * np.outer(
                steering_vector(aoa, 6), steering_vector(aod, 9).conj()
            )
        assert np.max(np.abs(h1 - by_sum)) <= 1e-12

    def test_h1_rank_two(self):
        rng = np.random.default_rng(3)
        cfg = ChannelConfig(n_bs=8, n_ris=12, n_paths_ris_bs=2)
        paths = draw_paths(cfg, 1, rng)
        s = np.linalg.svd(assemble_h1(paths, 8, 12), compute_uv=False)
        assert s[2] <= 1e-10 * s[0]

    def test_h1_rejects_second_hop(self):
        paths = PathSet(gains=np.ones(2), aoa_sines=np.zeros(2))
        with pytest.raises(ValueError):
            assemble_h1(paths, 4, 4)

    def test_h2_all_ones(self):
        paths = PathSet(gains=np.array([1.0 + 0j]), aoa_sines=np.zeros(1))
        np.testing.assert_allclose(assemble_h2(paths, 7), np.ones(7), atol=1e-15)

    def test_h2_linearity(self):
        c = 0.3 - 1.7j
        paths = PathSet(gains=np.array([c]), aoa_sines=np.array([0.4]))
        np.testing.assert_allclose(
            assemble_h2(paths, 5), c * steering_vector(0.4, 5), atol=1e-15
        )

    def test_h2_sum_form_agrees(self):
        rng = np.random.default_rng(21)
        cfg = ChannelConfig(n_bs=4, n_ris=10, n_paths_ms_ris=3)
        paths = draw_paths(cfg, 2, rng)
        h2 = assemble_h2(paths, 10)
        by_sum = sum(
            g * steering_vector(s, 10)
            for g, s in zip(paths.gains, paths.aoa_sines)
        )
        assert np.max(np.abs(h2 - by_sum)) <= 1e-12


class TestCascade:
    def test_all_ones_identity(self):
        rng = np.random.default_rng(5)
        h1 = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
        out = cascade(h1, np.ones(4))
        np.testing.assert_array_equal(out.matrix, h1)

    def test_zero_second_hop(self):
        h1 = np.ones((3, 4), dtype=complex)
        out = cascade(h1, np.zeros(4))
        assert np.all(out.matrix == 0) and np.all(out.vector == 0)

    def test_phase_identity(self):
        rng = np.random.default_rng(8)
        cfg = ChannelConfig(n_bs=5, n_ris=9, n_paths_ris_bs=2, n_paths_ms_ris=2)
        h1 = assemble_h1(draw_paths(cfg, 1, rng), 5, 9)
        h2 = assemble_h2(draw_paths(cfg, 2, rng), 9)
        out = cascade(h1, h2)
        omega = np.exp(1j * rng.uniform(0, 2 * np.pi, 9))
        lhs = out.matrix @ omega
        rhs = h1 @ (omega * h2)
        assert np.linalg.norm(lhs - rhs) <= 1e-12

    def test_vectorization_roundtrip(self):
        rng = np.random.default_rng(9)
        h1 = rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6))
        out = cascade(h1, rng.standard_normal(6) + 1j * rng.standard_normal(6))
        assert isinstance(out, CascadedChannel)
        np.testing.assert_array_equal(unvectorize(out.vector, 4, 6), out.matrix)
        # column-major convention: first n_bs entries are the first column
        np.testing.assert_array_equal(out.vector[:4], out.matrix[:, 0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            cascade(np.ones((3, 4)), np.ones(5))

    @pytest.mark.parametrize("paths", [1, 2, 3])
    def test_rank_bound(self, paths):
        cfg = ChannelConfig(
            n_bs=8, n_ris=16, n_paths_ris_bs=paths, n_paths_ms_ris=paths
        )
        rng = np.random.default_rng(paths)
        for _ in range(50):
            out = draw_cascaded(cfg, rng)
            s = np.linalg.svd(out.matrix, compute_uv=False)
            assert np.all(s[paths:] <= 1e-10 * s[0])

    def test_generation_determinism(self):
        cfg = ChannelConfig(n_bs=4, n_ris=8, n_paths_ris_bs=2, n_paths_ms_ris=2)
        a = draw_cascaded(cfg, np.random.default_rng(42))
        b = draw_cascaded(cfg, np.random.default_rng(42))
        assert np.array_equal(a.matrix, b.matrix)
        assert np.array_equal(a.vector, b.vector)
