import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from src.app.errors import ArgumentError, CapacityError, DegenerateInputError, DimensionError, QubitIndexError
from src.app.settings import settings
from src.quantum import statevec as sv
from tests import oracles
from tests.oracles import random_unit


def state(values):
    values = np.asarray(values, dtype=float)
    return sv.from_amplitudes(values, int(np.log2(len(values))))


class TestFromAmplitudes:
    def test_basis_vector(self):
        assert np.allclose(state([1, 0, 0, 0]).amplitudes, [1, 0, 0, 0])

    def test_uniform(self):
        assert np.allclose(state([1, 1, 1, 1]).amplitudes, [0.5] * 4)

    def test_three_four_five(self):
        assert np.allclose(state([3, 4, 0, 0]).amplitudes, [0.6, 0.8, 0, 0])

    def test_zero_vector_rejected(self):
        with pytest.raises(DegenerateInputError):
            sv.from_amplitudes([0, 0, 0, 0], 2)

    def test_norm_below_tolerance_rejected(self, monkeypatch):
        with pytest.raises(DegenerateInputError):
            sv.from_amplitudes([1e-11, 0, 0, 0], 2)
        assert np.allclose(sv.from_amplitudes([1e-9, 0, 0, 0], 2).amplitudes, [1, 0, 0, 0])
        monkeypatch.setattr(settings, "norm_tolerance", 1e-3)
        with pytest.raises(DegenerateInputError):
            sv.from_amplitudes([[1, 0, 0, 0], [1e-4, 0, 0, 0]], 2)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            sv.from_amplitudes([1, 0, 0], 2)

    def test_batch_rows_normalized(self):
        s = sv.from_amplitudes([[3, 4, 0, 0], [1, 1, 1, 1]], 2)
        assert s.is_batched and s.batch_size == 2
        assert np.allclose(s.norm(), [1.0, 1.0])

    def test_amplitudes_are_read_only(self):
        s = state([1, 0])
        with pytest.raises(ValueError):
            s.amplitudes[0] = 0.0

    def test_register_cap(self):
        with pytest.raises(CapacityError):
            sv.basis_state(settings.max_qubits + 1)


class TestGates:
    def test_ry_zero_is_identity(self, rng):
        s = sv.from_amplitudes(random_unit(rng, 3), 3)
        assert np.allclose(sv.apply_ry(s, 1, 0.0).amplitudes, s.amplitudes)

    def test_ry_pi_flips(self):
        assert np.allclose(sv.apply_ry(sv.basis_state(1), 0, np.pi).amplitudes, [0, 1])

    def test_ry_half_pi(self):
        assert np.allclose(sv.apply_ry(sv.basis_state(1), 0, np.pi / 2).amplitudes, [2**-0.5, 2**-0.5])

    def test_hadamard(self):
        assert np.allclose(sv.apply_hadamard(sv.basis_state(1, 0), 0).amplitudes, [2**-0.5, 2**-0.5])
        assert np.allclose(sv.apply_hadamard(sv.basis_state(1, 1), 0).amplitudes, [2**-0.5, -(2**-0.5)])

    def test_hadamard_involution(self, rng):
        s = sv.from_amplitudes(random_unit(rng, 3), 3)
        assert np.allclose(sv.apply_hadamard(sv.apply_hadamard(s, 2), 2).amplitudes, s.amplitudes)

    def test_cnot_truth_table(self):
        assert np.allclose(sv.apply_cnot(sv.basis_state(2, 0b10), 0, 1).amplitudes, sv.basis_state(2, 0b11).amplitudes)
        assert np.allclose(sv.apply_cnot(sv.basis_state(2, 0b00), 0, 1).amplitudes, sv.basis_state(2, 0b00).amplitudes)

    def test_cnot_entangles(self):
        out = sv.apply_cnot(state([1, 0, 1, 0]), 0, 1)
        assert np.allclose(out.amplitudes, [2**-0.5, 0, 0, 2**-0.5])

    def test_cswap(self):
        assert np.allclose(sv.apply_cswap(sv.basis_state(3, 0b101), 0, 1, 2).amplitudes, sv.basis_state(3, 0b110).amplitudes)
        assert np.allclose(sv.apply_cswap(sv.basis_state(3, 0b001), 0, 1, 2).amplitudes, sv.basis_state(3, 0b001).amplitudes)
        assert np.allclose(sv.apply_cswap(sv.basis_state(3, 0b111), 0, 1, 2).amplitudes, sv.basis_state(3, 0b111).amplitudes)

    def test_bad_indices(self):
        s = sv.basis_state(2)
        with pytest.raises(QubitIndexError):
            sv.apply_ry(s, 2, 0.1)
        with pytest.raises(ArgumentError):
            sv.apply_cnot(s, 1, 1)
        with pytest.raises(ArgumentError):
            sv.apply_cswap(sv.basis_state(3), 0, 1, 1)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_matches_dense_matrices(self, n, rng):
        psi = random_unit(rng, n)
        s = sv.from_amplitudes(psi, n)
        theta = rng.uniform(0, 2 * np.pi)
        s = sv.apply_ry(s, n - 1, theta)
        s = sv.apply_hadamard(s, 0)
        s = sv.apply_cnot(s, n - 1, 0)
        expected = oracles.cnot(n, n - 1, 0) @ oracles.single(n, 0, oracles.H) @ oracles.single(n, n - 1, oracles.ry(theta)) @ psi
        assert np.allclose(s.amplitudes, expected, atol=1e-12)

    def test_cswap_matches_dense(self, rng):
        psi = random_unit(rng, 4)
        out = sv.apply_cswap(sv.from_amplitudes(psi, 4), 3, 0, 2)
        assert np.allclose(out.amplitudes, oracles.cswap(4, 3, 0, 2) @ psi)

    def test_batched_equals_rowwise(self, rng):
        rows = np.stack([random_unit(rng, 3) for _ in range(5)])
        batch = sv.apply_cnot(sv.apply_ry(sv.from_amplitudes(rows, 3), 1, 0.7), 1, 2)
        for i, row in enumerate(rows):
            single = sv.apply_cnot(sv.apply_ry(sv.from_amplitudes(row, 3), 1, 0.7), 1, 2)
            assert np.allclose(batch.amplitudes[i], single.amplitudes)

    @hsettings(max_examples=50, deadline=None)
    @given(
        n=st.integers(min_value=2, max_value=5),
        theta=st.floats(min_value=-10, max_value=10, allow_nan=False),
        seed=st.integers(min_value=0, max_value=2**16),
    )
    def test_unitary_gates_preserve_norm(self, n, theta, seed):
        s = sv.from_amplitudes(random_unit(np.random.default_rng(seed), n), n)
        s = sv.apply_cnot(sv.apply_hadamard(sv.apply_ry(s, 0, theta), n - 1), 0, n - 1)
        if n >= 3:
            s = sv.apply_cswap(s, 1, 0, 2)
        assert abs(s.norm() - 1.0) < 1e-12


class TestReadout:
    def test_expect_z(self):
        assert sv.expect_z(sv.basis_state(1, 0), 0) == pytest.approx(1.0)
        assert sv.expect_z(sv.basis_state(1, 1), 0) == pytest.approx(-1.0)
        assert sv.expect_z(state([1, 1]), 0) == pytest.approx(0.0)

    def test_prob_zero(self):
        assert sv.prob_zero(sv.basis_state(1, 0), 0) == pytest.approx(1.0)
        assert sv.prob_zero(sv.basis_state(1, 1), 0) == pytest.approx(0.0)
        assert sv.prob_zero(state([1, 1]), 0) == pytest.approx(0.5)

    def test_sampled_estimate_is_seeded(self):
        s = state([1, 1])
        a = sv.sample_prob_zero(s, 0, 1000, np.random.default_rng(7))
        b = sv.sample_prob_zero(s, 0, 1000, np.random.default_rng(7))
        assert a == b and 0.4 < a < 0.6


class TestTensor:
    def test_order(self):
        assert np.allclose(sv.tensor(sv.basis_state(1, 0), sv.basis_state(1, 1)).amplitudes, sv.basis_state(2, 0b01).amplitudes)

    def test_plus_zero(self):
        out = sv.tensor(state([1, 1]), sv.basis_state(1, 0))
        assert np.allclose(out.amplitudes, [2**-0.5, 0, 2**-0.5, 0])

    def test_unit_norm(self, rng):
        out = sv.tensor(sv.from_amplitudes(random_unit(rng, 2), 2), sv.from_amplitudes(random_unit(rng, 3), 3))
        assert out.n_qubits == 5 and out.norm() == pytest.approx(1.0)

    def test_cap(self):
        with pytest.raises(CapacityError):
            sv.tensor(sv.basis_state(settings.max_qubits), sv.basis_state(1))


class TestResetBranches:
    def test_weights_and_reset_qubits(self, rng):
        s = sv.from_amplitudes(random_unit(rng, 4), 4)
        branches = sv.reset_branches(s, [2, 3])
        assert len(branches) == 4
        assert sum(w for w, _ in branches) == pytest.approx(1.0)
        for _, b in branches:
            assert b.norm() == pytest.approx(1.0)
            assert sv.prob_zero(b, 2) == pytest.approx(1.0)
            assert sv.prob_zero(b, 3) == pytest.approx(1.0)

    def test_product_state_has_single_branch(self):
        s = sv.basis_state(3, 0b011)
        weights = [w for w, _ in sv.reset_branches(s, [1, 2])]
        assert weights == pytest.approx([0.0, 0.0, 0.0, 1.0])

    def test_repeated_qubits(self):
        with pytest.raises(ArgumentError):
            sv.reset_branches(sv.basis_state(2), [1, 1])


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
def test_swap_test_estimates_overlap(n):
    rng = np.random.default_rng(n)
    u = np.stack([random_unit(rng, n) for _ in range(100)])
    v = np.stack([random_unit(rng, n) for _ in range(100)])
    register = sv.tensor(sv.tensor(sv.from_amplitudes(u, n), sv.from_amplitudes(v, n)), sv.basis_state(1))
    ancilla = 2 * n
    register = sv.apply_hadamard(register, ancilla)
    for i in range(n):
        register = sv.apply_cswap(register, ancilla, i, n + i)
    register = sv.apply_hadamard(register, ancilla)
    expected = 0.5 * (1.0 + np.abs(np.sum(u * v, axis=1)) ** 2)
    assert np.max(np.abs(sv.prob_zero(register, ancilla) - expected)) < 1e-9


def test_swap_test_matches_dense_circuit(rng):
    u, v = random_unit(rng, 2), random_unit(rng, 2)
    register = sv.tensor(sv.tensor(sv.from_amplitudes(u, 2), sv.from_amplitudes(v, 2)), sv.basis_state(1))
    register = sv.apply_hadamard(register, 4)
    register = sv.apply_cswap(sv.apply_cswap(register, 4, 0, 2), 4, 1, 3)
    register = sv.apply_hadamard(register, 4)
    assert sv.prob_zero(register, 4) == pytest.approx(oracles.swap_test_prob_zero(u, v), abs=1e-12)


class TestImplicitAncillaSwapTest:
    @pytest.mark.parametrize("pairs", [[(0, 3), (1, 4), (2, 5)], [(0, 4), (2, 1)], [(5, 0)]])
    def test_matches_explicit_ancilla(self, pairs, rng):
        rows = np.stack([random_unit(rng, 6) for _ in range(4)])
        s = sv.from_amplitudes(rows, 6)
        register = sv.apply_hadamard(sv.tensor(s, sv.basis_state(1)), 6)
        for a, b in pairs:
            register = sv.apply_cswap(register, 6, a, b)
        register = sv.apply_hadamard(register, 6)
        assert np.allclose(sv.swap_test_prob_zero(s, pairs), sv.prob_zero(register, 6), atol=1e-12)

    def test_overlap_identity(self, rng):
        u, v = random_unit(rng, 3), random_unit(rng, 3)
        register = sv.tensor(sv.from_amplitudes(u, 3), sv.from_amplitudes(v, 3))
        got = sv.swap_test_prob_zero(register, [(i, 3 + i) for i in range(3)])
        assert got == pytest.approx(oracles.swap_test_prob_zero(u, v), abs=1e-12)

    def test_bad_pairs(self):
        s = sv.basis_state(4)
        with pytest.raises(ArgumentError):
            sv.swap_test_prob_zero(s, [(0, 2), (2, 3)])
        with pytest.raises(QubitIndexError):
            sv.swap_test_prob_zero(s, [(0, 4)])


class TestStack:
    def test_rows_in_order(self, rng):
        a = sv.from_amplitudes(random_unit(rng, 2), 2)
        b = sv.from_amplitudes(np.stack([random_unit(rng, 2) for _ in range(3)]), 2)
        out = sv.stack([a, b, a])
        assert out.batch_size == 5
        assert np.array_equal(out.amplitudes[0], a.amplitudes)
        assert np.array_equal(out.amplitudes[1:4], b.amplitudes)
        assert np.array_equal(out.amplitudes[4], a.amplitudes)

    def test_errors(self):
        with pytest.raises(ArgumentError):
            sv.stack([])
        with pytest.raises(DimensionError):
            sv.stack([sv.basis_state(1), sv.basis_state(2)])
