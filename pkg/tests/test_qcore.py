import math

import numpy as np
import pytest
from scipy import stats

from qstat import qcore, qmat
from qstat.qcore import (
    BlochVector,
    DensityMatrix,
    Ensemble,
    PureState,
    RngStream,
    polar_to_ket,
    spin_pvm,
)
from qstat.qfisher import pair_povm_7
from qstat.qmat import SIGMA_X, SIGMA_Y, SIGMA_Z

S = 1 / math.sqrt(2)
UP_Z = PureState(qmat.ket(1, 0))
DOWN_Z = PureState(qmat.ket(0, 1))
UP_X = PureState(qmat.ket(S, S))
DOWN_X = PureState(qmat.ket(S, -S))


def close_states(a, b, tol=1e-12):
    return abs(abs(a.overlap(b)) - 1) < tol


class TestRngStream:
    def test_reproducible(self):
        np.testing.assert_array_equal(RngStream(7, 3).random(5), RngStream(7, 3).random(5))

    def test_streams_differ(self):
        assert not np.array_equal(RngStream(7, 3).random(5), RngStream(7, 4).random(5))

    def test_children(self):
        root = RngStream(7)
        np.testing.assert_array_equal(root.child(2).random(4), RngStream(7).child(2).random(4))
        assert not np.array_equal(root.child(1).random(4), root.child(2).random(4))

    def test_negative_seed(self):
        with pytest.raises(ValueError):
            RngStream(-1)


class TestStates:
    def test_north_pole(self):
        np.testing.assert_allclose(polar_to_ket(0, 0).amplitudes, [1, 0])

    def test_south_pole_orthogonal(self):
        s = polar_to_ket(math.pi, 0)
        assert abs(s.overlap(UP_Z)) < 1e-15
        assert close_states(s, DOWN_Z)

    def test_equator(self):
        s = polar_to_ket(math.pi / 2, 0)
        np.testing.assert_allclose(s.amplitudes, [S, S], atol=1e-15)
        np.testing.assert_allclose(qcore.bloch_of(s), [1, 0, 0], atol=1e-15)

    def test_bloch_consistency(self, rng):
        g = rng.generator
        for _ in range(100):
            theta, phi = g.uniform(0, math.pi), g.uniform(0, 2 * math.pi)
            np.testing.assert_allclose(
                qcore.bloch_of(polar_to_ket(theta, phi)), qcore.polar_to_unit(theta, phi), atol=1e-12
            )

    @pytest.mark.parametrize("theta,phi", [(-0.1, 0), (3.2, 0), (1, 2 * math.pi)])
    def test_out_of_range(self, theta, phi):
        with pytest.raises(ValueError):
            polar_to_ket(theta, phi)

    def test_canonical_phase(self):
        a = PureState(qmat.ket(1j * S, 1j * S))
        np.testing.assert_allclose(a.amplitudes, [S, S])

    def test_unnormalized_rejected(self):
        with pytest.raises(ValueError):
            PureState(qmat.ket(1, 1))

    def test_bloch_to_density_examples(self):
        np.testing.assert_allclose(qcore.bloch_to_density(BlochVector(0, 0, 0)).mat, 0.5 * np.eye(2))
        np.testing.assert_allclose(qcore.bloch_to_density(BlochVector(0, 0, 1)).mat, np.diag([1, 0]))
        np.testing.assert_allclose(qcore.bloch_to_density(BlochVector(1, 0, 0)).mat, 0.5 * np.ones((2, 2)))

    def test_bloch_too_long(self):
        with pytest.raises(ValueError):
            qcore.bloch_to_density(BlochVector(1, 1, 0))

    def test_bloch_round_trip(self, rng):
        for _ in range(100):
            a = qcore.random_bloch(rng)
            rho = qcore.bloch_to_density(a)
            np.testing.assert_allclose(qcore.density_to_bloch(rho).vector, a.vector, atol=1e-12)
            np.testing.assert_allclose(qcore.bloch_to_density(qcore.density_to_bloch(rho)).mat, rho.mat, atol=1e-12)

    def test_density_to_bloch_examples(self):
        np.testing.assert_allclose(qcore.density_to_bloch(DensityMatrix(0.5 * np.eye(2))).vector, 0)
        np.testing.assert_allclose(qcore.density_to_bloch(DensityMatrix(np.diag([1.0, 0.0]))).vector, [0, 0, 1])

    def test_density_to_bloch_wrong_dim(self):
        with pytest.raises(ValueError):
            qcore.density_to_bloch(DensityMatrix(np.eye(3) / 3))

    @pytest.mark.parametrize(
        "mat",
        [np.array([[1, 1], [0, 0]]), np.diag([1.5, -0.5]), np.diag([0.6, 0.6])],
        ids=["non-hermitian", "negative", "trace"],
    )
    def test_density_invariants(self, mat):
        with pytest.raises(ValueError):
            DensityMatrix(mat)

    def test_purity(self, rng):
        for _ in range(50):
            assert qcore.random_pure_state(3, rng).density().is_pure()
            assert not qcore.random_density(3, rng).is_pure()
            a = qcore.random_bloch(rng, 0.99)
            assert not qcore.bloch_to_density(a).is_pure()
        assert qcore.bloch_to_density(BlochVector(0, 0.6, 0.8)).is_pure()


class TestEnsembles:
    def test_up_down(self):
        ens = Ensemble(((0.5, UP_Z), (0.5, DOWN_Z)))
        np.testing.assert_allclose(qcore.mix(ens).mat, 0.5 * np.eye(2))

    def test_scenarios_indistinguishable(self, rng):
        a = qcore.mix(Ensemble(((0.5, UP_Z), (0.5, DOWN_Z)))).mat
        b = qcore.mix(Ensemble(((0.5, UP_X), (0.5, DOWN_X)))).mat
        assert np.max(np.abs(a - b)) <= 1e-15
        for i in range(100):
            m = qcore.random_povm(2, 2 + i % 5, rng.child(i))
            np.testing.assert_allclose(
                qcore.probabilities(DensityMatrix(a), m), qcore.probabilities(DensityMatrix(b), m), atol=1e-15
            )

    def test_single(self, rng):
        psi = qcore.random_pure_state(3, rng)
        np.testing.assert_allclose(qcore.mix(Ensemble(((1.0, psi),))).mat, qmat.projector(psi.ket))

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            Ensemble(((0.6, UP_Z), (0.6, DOWN_Z)))


class TestEvolution:
    def test_zero_time(self, rng):
        psi = qcore.random_pure_state(2, rng)
        assert close_states(qcore.evolve(psi, SIGMA_X, 0.0), psi)

    def test_sigma_z_pi(self):
        out = qcore.evolve(UP_X, SIGMA_Z, math.pi / 2)
        assert close_states(out, DOWN_X)

    def test_unitarity(self, rng):
        for i in range(50):
            u = qcore.unitary_from_hamiltonian(qcore.random_hermitian(3, rng), rng.random() * 10)
            assert np.max(np.abs(u.conj().T @ u - np.eye(3))) < 1e-12

    def test_density_trace_preserved(self, rng):
        rho = qcore.random_density(3, rng)
        out = qcore.evolve(rho, qcore.random_hermitian(3, rng), 1.3)
        assert abs(np.trace(out.mat) - 1) < 1e-12

    def test_sign_change_and_flip(self):
        alpha, beta = 0.6, 0.8j
        psi = PureState(qmat.ket(alpha, beta))
        assert close_states(qcore.apply_unitary(psi, np.diag([1, -1])), PureState(qmat.ket(alpha, -beta)))
        assert close_states(qcore.apply_unitary(psi, SIGMA_X), PureState(qmat.ket(beta, alpha)))

    def test_hadamard(self):
        alpha, beta = 0.6, 0.8j
        h = np.array([[1, 1], [1, -1]]) * S
        out = qcore.apply_unitary(PureState(qmat.ket(alpha, beta)), h)
        assert close_states(out, PureState(qmat.ket((alpha + beta) * S, (alpha - beta) * S)))

    def test_non_unitary(self):
        with pytest.raises(ValueError):
            qcore.apply_unitary(UP_Z, 2 * np.eye(2))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            qcore.evolve(UP_Z, np.eye(3), 1.0)


class TestMeasurement:
    def test_spin_z_probability(self, rng):
        for _ in range(20):
            a = qcore.random_unit(rng)
            psi = qcore.bloch_to_density(BlochVector.from_array(a))
            p = qcore.probabilities(psi, spin_pvm([0, 0, 1]))
            np.testing.assert_allclose(p, [0.5 * (1 + a[2]), 0.5 * (1 - a[2])], atol=1e-14)

    def test_spin_orthogonal_and_aligned(self):
        np.testing.assert_allclose(qcore.probabilities(UP_Z, spin_pvm([1, 0, 0])), [0.5, 0.5])
        np.testing.assert_allclose(qcore.probabilities(UP_X, spin_pvm([1, 0, 0])), [1, 0], atol=1e-15)

    def test_spin_observable(self):
        v = np.array([0.0, 0.6, 0.8])
        np.testing.assert_allclose(qcore.pvm_to_observable(spin_pvm(v)), qcore.bloch_operator(v), atol=1e-15)

    def test_spin_non_unit(self):
        with pytest.raises(ValueError):
            spin_pvm([1, 1, 0])

    def test_triad_on_v1(self):
        m = qcore.triad_povm()
        v1 = qcore.triad_vectors()[0]
        rho = qcore.bloch_to_density(BlochVector.from_array(v1))
        np.testing.assert_allclose(qcore.probabilities(rho, m), [2 / 3, 1 / 6, 1 / 6], atol=1e-14)

    def test_pvm_on_mixed(self, rng):
        m = qcore.random_pvm(2, rng)
        np.testing.assert_allclose(qcore.probabilities(DensityMatrix(0.5 * np.eye(2)), m), [0.5, 0.5])

    def test_hadamard_rotated(self):
        alpha, beta = 0.6, 0.8j
        m = qcore.pvm_from_vectors([qmat.ket(S, S), qmat.ket(S, -S)])
        p = qcore.probabilities(PureState(qmat.ket(alpha, beta)), m)
        np.testing.assert_allclose(p, [abs(alpha + beta) ** 2 / 2, abs(alpha - beta) ** 2 / 2], atol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            qcore.probabilities(UP_Z, qcore.random_pvm(3, RngStream(1)))

    def test_measure_eigenstate(self, rng):
        res = qcore.measure(UP_Z, spin_pvm([0, 0, 1]), rng)
        assert res.label == 1 and res.probability == pytest.approx(1)
        assert close_states(res.posterior, UP_Z)

    def test_measure_x_on_up(self, rng):
        for i in range(20):
            res = qcore.measure(UP_Z, spin_pvm([1, 0, 0]), rng.child(i))
            assert res.probability == pytest.approx(0.5)
            assert close_states(res.posterior, UP_X if res.label == 1 else DOWN_X)

    def test_repeat_measurement(self, rng):
        m = qcore.random_pvm(3, rng)
        for i in range(50):
            first = qcore.measure(qcore.random_pure_state(3, rng), m, rng.child(i))
            second = qcore.measure(first.posterior, m, rng.child(1000 + i))
            assert second.label == first.label

    def test_measure_density_projection(self, rng):
        rho = qcore.random_density(2, rng)
        res = qcore.measure(rho, spin_pvm([0, 0, 1]), rng)
        assert res.posterior.is_pure()

    def test_measure_rejects_povm(self, rng):
        with pytest.raises(TypeError):
            qcore.measure(UP_Z, qcore.triad_povm(), rng)

    def test_frequencies(self):
        rho = qcore.bloch_to_density(BlochVector(0.3, -0.2, 0.5))
        m = qcore.triad_povm()
        p = qcore.probabilities(rho, m)
        n = 100_000
        idx = qcore.sample_indices(rho, m, n, RngStream(99))
        freq = np.bincount(idx, minlength=3) / n
        se = np.sqrt(p * (1 - p) / n)
        assert np.all(np.abs(freq - p) < 3 * se)

    def test_chi_square_battery(self):
        for seed in range(10):
            rng = RngStream(1000 + seed)
            m = qcore.random_pvm(4, rng)
            psi = qcore.random_pure_state(4, rng)
            p = qcore.probabilities(psi, m)
            labels = [qcore.measure(psi, m, rng).label for _ in range(2000)]
            counts = np.array([labels.count(lab) for lab in m.labels])
            assert stats.chisquare(counts, 2000 * p).pvalue > 1e-3

    def test_zero_probability_unreachable(self, rng):
        idx = qcore.sample_indices(UP_Z, spin_pvm([0, 0, 1]), 10_000, rng)
        assert np.all(idx == 0)

    def test_preparation_by_measurement(self, rng):
        for i in range(100):
            v = qcore.random_unit(rng)
            psi = qcore.random_pure_state(2, rng)
            res = qcore.condition_on(psi, spin_pvm(v), 1)
            np.testing.assert_allclose(qcore.bloch_of(res.posterior), v, atol=1e-10)

    def test_product_independence(self, rng):
        for i in range(20):
            r1, r2 = qcore.random_density(2, rng), qcore.random_density(3, rng)
            m1, m2 = qcore.random_pvm(2, rng), qcore.random_pvm(3, rng)
            joint = DensityMatrix(qmat.tensor(r1.mat, r2.mat))
            p1, p2 = qcore.probabilities(r1, m1), qcore.probabilities(r2, m2)
            for a, e1 in enumerate(m1.elements):
                for b, e2 in enumerate(m2.elements):
                    pj = np.trace(joint.mat @ qmat.tensor(e1, np.eye(3)) @ qmat.tensor(np.eye(2), e2)).real
                    assert abs(pj - p1[a] * p2[b]) < 1e-12


class TestObservables:
    def test_expectation_examples(self, rng):
        assert qcore.expectation(UP_Z, np.eye(2)) == pytest.approx(1)
        assert qcore.expectation(UP_Z, SIGMA_Z) == pytest.approx(1)
        a, u = qcore.random_bloch(rng), qcore.random_unit(rng)
        rho = qcore.bloch_to_density(a)
        assert qcore.expectation(rho, qcore.bloch_operator(u)) == pytest.approx(u @ a.vector, abs=1e-14)

    def test_expectation_non_hermitian(self):
        with pytest.raises(ValueError):
            qcore.expectation(UP_Z, np.array([[0, 1], [0, 0]]))

    def test_observable_to_pvm(self):
        m = qcore.observable_to_pvm(SIGMA_Z)
        assert m.labels == (-1.0, 1.0)
        np.testing.assert_allclose(m.elements[1], np.diag([1, 0]), atol=1e-15)
        ident = qcore.observable_to_pvm(np.eye(2))
        assert len(ident) == 1 and ident.labels[0] == pytest.approx(1)

    def test_round_trip(self, rng):
        for _ in range(50):
            h = qcore.random_hermitian(4, rng)
            np.testing.assert_allclose(qcore.pvm_to_observable(qcore.observable_to_pvm(h)), h, atol=1e-10)

    def test_unconscious_square(self, rng):
        d1, d2 = qcore.unconscious_physicist_check(qcore.random_density(2, rng), SIGMA_Z, lambda x: x * x)
        assert len(d1) == 1 and len(d2) == 1
        assert d1[0][0] == pytest.approx(1) and d1[0][1] == pytest.approx(1)
        assert d2[0][0] == pytest.approx(1) and d2[0][1] == pytest.approx(1)

    def test_unconscious_lookup_table(self, rng):
        g = rng.generator
        for _ in range(50):
            # integer spectrum keeps the lookup well defined on every eigenvalue
            u = qcore.random_pvm(4, rng)
            vals = g.integers(-3, 4, size=4).astype(float)
            x = sum(v * p for v, p in zip(vals, u.elements))
            table = {k: float(g.integers(0, 3)) for k in range(-3, 4)}
            f = lambda t: table[int(round(t))]
            d1, d2 = qcore.unconscious_physicist_check(qcore.random_density(4, rng), x, f)
            assert len(d1) == len(d2)
            for (v1, p1), (v2, p2) in zip(d1, d2):
                assert abs(v1 - v2) < 1e-8 and abs(p1 - p2) < 1e-10

    def test_lift(self):
        np.testing.assert_array_equal(qcore.lift_observable(SIGMA_Z, "first", 2), np.kron(SIGMA_Z, np.eye(2)))
        np.testing.assert_array_equal(qcore.lift_observable(np.eye(2), "second", 2), np.eye(4))
        c = qmat.commutator(qcore.lift_observable(SIGMA_X, "first", 2), qcore.lift_observable(SIGMA_Y, "second", 2))
        assert np.max(np.abs(c)) < 1e-14

    def test_lift_bad_side(self):
        with pytest.raises(ValueError):
            qcore.lift_observable(SIGMA_Z, "middle", 2)


class TestSpecialPovms:
    def test_triad_sum_and_spectrum(self):
        m = qcore.triad_povm((0.0, 0.6, 0.8))
        np.testing.assert_allclose(sum(m.elements), np.eye(2), atol=1e-12)
        for e in m.elements:
            np.testing.assert_allclose(np.linalg.eigvalsh(e), [0, 2 / 3], atol=1e-12)

    def test_triad_guessing(self):
        m = qcore.triad_povm()
        vs = qcore.triad_vectors()
        success = np.mean(
            [qcore.probabilities(qcore.bloch_to_density(BlochVector.from_array(v)), m)[i] for i, v in enumerate(vs)]
        )
        assert success == pytest.approx(2 / 3, abs=1e-14)

    def test_triad_non_unit(self):
        with pytest.raises(ValueError):
            qcore.triad_povm((0, 0, 2))

    def test_octahedron_exact(self):
        raw = qcore.sphere_elements_raw(qcore.OCTAHEDRON)
        np.testing.assert_allclose(sum(raw), np.eye(2), atol=1e-15)
        m = qcore.sphere_povm(6, points=qcore.OCTAHEDRON)
        for a, b in zip(m.elements, raw):
            np.testing.assert_allclose(a, b, atol=1e-15)

    @pytest.mark.parametrize("k", [4, 7, 50, 333])
    def test_sphere_sums_to_identity(self, k):
        np.testing.assert_allclose(sum(qcore.sphere_povm(k).elements), np.eye(2), atol=1e-12)

    def test_sphere_quadrature(self):
        dev = sum(qcore.sphere_elements_raw(qcore.fibonacci_sphere(1000))) - np.eye(2)
        assert np.linalg.norm(dev, 2) < 0.01

    def test_sphere_too_few(self):
        with pytest.raises(ValueError):
            qcore.sphere_povm(3)

    def test_povm_invariants(self):
        with pytest.raises(ValueError):
            qcore.Povm((0, 1), (np.diag([1, 0]), np.diag([0.5, 0.5])))
        with pytest.raises(ValueError):
            qcore.Pvm((0, 1), (0.5 * np.eye(2), 0.5 * np.eye(2)))
        with pytest.raises(ValueError):
            qcore.Povm((0, 0), (np.diag([1, 0]), np.diag([0, 1])))


class TestNaimark:
    def check(self, m, states):
        dil = qcore.naimark_dilation(m)
        assert dil.ancilla_dim == len(m)
        assert qcore.is_unitary(dil.joint_unitary)
        for rho in states:
            np.testing.assert_allclose(qcore.dilation_probabilities(dil, rho), qcore.probabilities(rho, m), atol=1e-10)

    def test_pvm(self, rng):
        self.check(qcore.random_pvm(3, rng), [qcore.random_pure_state(3, rng) for _ in range(100)])

    def test_triad(self, rng):
        self.check(qcore.triad_povm(), [qcore.random_density(2, rng) for _ in range(50)])

    def test_pair_povm(self, rng):
        self.check(pair_povm_7(), [qcore.random_density(4, rng) for _ in range(20)])

    def test_random_povm(self, rng):
        self.check(qcore.random_povm(3, 5, rng), [qcore.random_density(3, rng) for _ in range(20)])

    def test_deterministic(self):
        a = qcore.naimark_dilation(qcore.triad_povm()).joint_unitary
        b = qcore.naimark_dilation(qcore.triad_povm()).joint_unitary
        np.testing.assert_array_equal(a, b)


class TestFixtures:
    def test_state_round_trip(self, rng):
        psi = qcore.random_pure_state(3, rng)
        out = qcore.from_json(qcore.state_to_json(psi))
        np.testing.assert_allclose(out.ket, psi.ket, atol=1e-15)
        rho = qcore.random_density(2, rng)
        np.testing.assert_allclose(qcore.from_json(qcore.state_to_json(rho)).mat, rho.mat)

    def test_povm_round_trip(self):
        m = qcore.triad_povm()
        out = qcore.from_json(qcore.povm_to_json(m))
        assert type(out) is qcore.Povm and out.labels == m.labels
        p = qcore.from_json(qcore.povm_to_json(spin_pvm([0, 0, 1])))
        assert isinstance(p, qcore.Pvm)

    def test_ensemble_round_trip(self):
        ens = Ensemble(((0.25, UP_Z), (0.75, DOWN_X)))
        out = qcore.from_json(qcore.ensemble_to_json(ens))
        np.testing.assert_allclose(qcore.mix(out).mat, qcore.mix(ens).mat)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            qcore.from_json({"kind": "banana"})
