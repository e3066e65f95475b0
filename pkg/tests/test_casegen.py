import numpy as np
import pytest
import scipy.linalg

from modred_bounds.casegen import (
    BeamSpec,
    beam_element_matrices,
    beam_fe_matrices,
    beam_statespace,
    build_three_beam_benchmark,
    epsilon_c_profile,
    free_dof_index,
    modal_damped_statespace,
    random_coupled_system,
    three_beam_K,
    three_beam_specs,
)
from modred_bounds.interconnect import check_internal_stability, check_wellposed, upper_lft_Gc
from modred_bounds.lti import LTIError, freq_response, hinf_norm, is_stable

STEEL = dict(cross_section_area=1e-5, second_area_moment=1e-9, youngs_modulus=2e11,
             density=8e3, modal_damping_ratio=0.06)


class TestBeamFE:
    def test_single_element_tip_deflection(self):
        spec = BeamSpec(length=0.7, n_elements=1, **STEEL)
        M, K = beam_fe_matrices(spec)
        F = np.zeros(K.shape[0])
        F[free_dof_index(spec, 1, "t")] = 3.0
        defl = np.linalg.solve(K, F)[free_dof_index(spec, 1, "t")]
        assert defl == pytest.approx(3.0 * 0.7**3 / (3 * spec.EI), rel=1e-12)

    def test_element_matrices_symmetric(self):
        k, m = beam_element_matrices(2.0, 3.0, 0.5)
        np.testing.assert_allclose(k, k.T)
        np.testing.assert_allclose(m, m.T)
        # rigid translation carries no strain energy; total mass is rhoA * le
        np.testing.assert_allclose(k @ [1, 0, 1, 0], 0, atol=1e-12)
        assert np.array([1, 0, 1, 0]) @ m @ [1, 0, 1, 0] == pytest.approx(1.5)

    def test_benchmark_beam1_dof_count(self):
        M, K = beam_fe_matrices(three_beam_specs()[0])
        assert M.shape == (200, 200)

    def test_cantilever_first_frequency(self):
        spec = three_beam_specs()[0]
        M, K = beam_fe_matrices(spec)
        w1 = np.sqrt(scipy.linalg.eigh(K, M, eigvals_only=True).min())
        analytic = 1.875104**2 * np.sqrt(spec.EI / (spec.rhoA * spec.length**4))
        assert analytic == pytest.approx(175.80, rel=1e-4)
        assert w1 == pytest.approx(175.80, rel=0.005)

    def test_free_free_has_two_rigid_modes(self):
        M, K = beam_fe_matrices(three_beam_specs()[1])
        lam = np.sort(np.linalg.eigvals(np.linalg.solve(M, K)).real)
        assert np.all(np.abs(lam[:2]) < 1e-6 * lam[-1] * 1e-6)
        assert lam[2] > 1.0

    def test_bad_specs(self):
        with pytest.raises(LTIError):
            BeamSpec(length=-1.0, n_elements=2, **STEEL)
        with pytest.raises(LTIError):
            BeamSpec(length=1.0, n_elements=2, input_dofs=((0, "t"),), **STEEL)
        with pytest.raises(LTIError):
            BeamSpec(length=1.0, n_elements=2, boundary="pinned", **STEEL)


class TestModalStateSpace:
    def test_single_dof_poles(self):
        g = modal_damped_statespace([[1.0]], [[4.0]], 0.06, [0], [0])
        poles = np.sort_complex(np.linalg.eigvals(g.A))
        expected = -0.12 + np.array([-1, 1]) * 2 * np.sqrt(1 - 0.06**2) * 1j
        np.testing.assert_allclose(poles, expected, atol=1e-12)
        assert abs(expected[1].imag - 1.9964) < 1e-4

    def test_single_dof_dc_gain(self):
        g = modal_damped_statespace([[1.0]], [[4.0]], 0.06, [0], [0])
        dc = g.D - g.C @ np.linalg.solve(g.A, g.B)
        assert dc[0, 0] == pytest.approx(0.25)

    def test_beam1_dc_gain(self, benchmark):
        spec = three_beam_specs()[0]
        g = benchmark.subsystems[0]
        dc = g.D - g.C @ np.linalg.solve(g.A, g.B)
        assert dc[0, 0] == pytest.approx(spec.length**3 / (3 * spec.EI), rel=0.005)

    def test_benchmark_beams_stable(self, benchmark):
        assert is_stable(benchmark.subsystems[0])
        assert is_stable(benchmark.subsystems[2])
        # beam 2 keeps its rigid-body modes, which sit on the imaginary axis
        ev = np.linalg.eigvals(benchmark.subsystems[1].A)
        assert np.sum(np.abs(ev) < 1e-9) == 4
        assert np.all(ev.real <= 1e-12)

    def test_zeta_checked(self):
        with pytest.raises(LTIError):
            modal_damped_statespace([[1.0]], [[1.0]], 0.0, [0], [0])


class TestBenchmark:
    def test_dimensions(self, benchmark):
        assert [g.n for g in benchmark.subsystems] == [400, 164, 240]
        assert [(g.m, g.p) for g in benchmark.subsystems] == [(2, 2), (5, 4), (2, 3)]
        K = benchmark.K
        assert (K.m_b, K.p_b, K.m_c, K.p_c) == (9, 9, 1, 1)

    def test_mini_dimensions(self, mini_benchmark):
        # free dofs: 10 elements clamped (20), 4 free-free (10), 6 clamped (12)
        assert [g.n for g in mini_benchmark.subsystems] == [40, 20, 24]

    def test_k_entries(self):
        K = three_beam_K()
        assert K[0, 0] == -4e4 and K[1, 1] == -4e2
        np.testing.assert_array_equal(K[4], np.eye(10)[9])
        np.testing.assert_array_equal(K[9], np.eye(10)[8])
        # spring forces are equal and opposite
        np.testing.assert_array_equal(K[0, :4] + K[2, :4], 0)

    def test_assumptions(self, benchmark):
        assert check_wellposed(benchmark).ok
        assert check_internal_stability(benchmark)
        gc = upper_lft_Gc(benchmark)
        val, _ = hinf_norm(gc, grid=np.logspace(1.5, 4, 200))
        assert np.isfinite(val) and val > 0

    def test_deterministic(self):
        a = build_three_beam_benchmark(mini=True)
        b = build_three_beam_benchmark(mini=True)
        for g, h in zip(a.subsystems, b.subsystems):
            np.testing.assert_array_equal(g.A, h.A)
            np.testing.assert_array_equal(g.C, h.C)

    def test_odd_mid_node_rejected(self):
        with pytest.raises(LTIError):
            three_beam_specs((10, 5, 6))

    def test_beam_statespace_io(self):
        g = beam_statespace(three_beam_specs((4, 2, 2))[1])
        assert (g.m, g.p, g.n) == (5, 4, 12)


class TestProfile:
    def test_formula(self):
        np.testing.assert_allclose(epsilon_c_profile([1e-5, 1e-9]), [1e-6, 5e-7])

    def test_positive_parameters(self):
        with pytest.raises(LTIError):
            epsilon_c_profile([1.0], beta1=0.0)


class TestRandomSystems:
    def test_seed_determinism(self):
        a, b = random_coupled_system(42, k=3), random_coupled_system(42, k=3)
        np.testing.assert_array_equal(a.K.full, b.K.full)
        for g, h in zip(a.subsystems, b.subsystems):
            np.testing.assert_array_equal(g.A, h.A)

    @pytest.mark.parametrize("seed", range(30))
    def test_assumptions_hold(self, seed):
        cs = random_coupled_system(seed, k=1 + seed % 3)
        assert check_wellposed(cs).ok
        assert check_internal_stability(cs)

    def test_zero_coupling(self):
        cs = random_coupled_system(3, k=2, coupling_scale=0.0)
        np.testing.assert_array_equal(cs.K.K11, 0)

    def test_dims(self):
        cs = random_coupled_system(4, dims=[(3, 1, 2), (2, 2, 1)])
        assert [(g.n, g.m, g.p) for g in cs.subsystems] == [(3, 1, 2), (2, 2, 1)]
        assert freq_response(upper_lft_Gc(cs), 1.0).shape == (1, 1)
