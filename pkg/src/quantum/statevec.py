"""Dense statevector simulator for the patch circuits.

Bit ordering: qubit 0 addresses the most significant bit of the basis index,
so for a patch state the basis index k reads pixels in row-major order.

A StateVector may carry a leading batch axis: ``amplitudes`` has shape
``(2**n,)`` for one state or ``(B, 2**n)`` for B independent states. Every
operation acts row-wise, which is how whole patch grids are simulated at once.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Sequence, Tuple

import numpy as np

from src.app.errors import ArgumentError, CapacityError, DegenerateInputError, DimensionError, QubitIndexError
from src.app.settings import settings

logger = logging.getLogger(__name__)

_SQRT2_INV = 1.0 / np.sqrt(2.0)
_HADAMARD = np.array([[_SQRT2_INV, _SQRT2_INV], [_SQRT2_INV, -_SQRT2_INV]], dtype=complex)


@dataclass(frozen=True)
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        if self.n_qubits < 0:
            raise DimensionError(f"n_qubits must be >= 0, got {self.n_qubits}")
        if self.n_qubits > settings.max_qubits:
            raise CapacityError(f"{self.n_qubits} qubits exceeds the register cap of {settings.max_qubits}")
        if self.amplitudes.ndim not in (1, 2) or self.amplitudes.shape[-1] != 1 << self.n_qubits:
            raise DimensionError(
                f"amplitudes shape {self.amplitudes.shape} does not match {self.n_qubits} qubits"
            )
        self.amplitudes.setflags(write=False)

    @property
    def is_batched(self) -> bool:
        return self.amplitudes.ndim == 2

    @property
    def batch_size(self) -> int:
        return self.amplitudes.shape[0] if self.is_batched else 1

    def norm(self) -> np.ndarray | float:
        return _unbatch(np.linalg.norm(self.amplitudes, axis=-1))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def rows(self, start: int, stop: int) -> "StateVector":
        if not self.is_batched:
            raise ArgumentError("rows() needs a batched state")
        return StateVector(self.n_qubits, self.amplitudes[start:stop])


def _unbatch(values: np.ndarray) -> np.ndarray | float:
    return float(values) if np.ndim(values) == 0 else values


def _check_qubit(state: StateVector, q: int) -> None:
    if not isinstance(q, (int, np.integer)) or not 0 <= q < state.n_qubits:
        raise QubitIndexError(f"qubit {q} is out of range for a {state.n_qubits}-qubit register")


def _new(state: StateVector, amplitudes: np.ndarray) -> StateVector:
    return StateVector(state.n_qubits, amplitudes)


def from_amplitudes(values: Sequence[float] | np.ndarray, n_qubits: int) -> StateVector:
    """Amplitude-encode real values (one vector, or one per row) as normalized states."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim not in (1, 2) or arr.shape[-1] != 1 << n_qubits:
        raise DimensionError(f"expected {1 << n_qubits} values per state, got shape {arr.shape}")
    norms = np.linalg.norm(arr, axis=-1, keepdims=True)
    if np.any(norms <= settings.norm_tolerance):
        raise DegenerateInputError(f"amplitude vector norm at or below {settings.norm_tolerance:g}, cannot normalize")
    return StateVector(n_qubits, (arr / norms).astype(complex))


def basis_state(n_qubits: int, index: int = 0) -> StateVector:
    if not 0 <= index < 1 << n_qubits:
        raise ArgumentError(f"basis index {index} out of range for {n_qubits} qubits")
    amplitudes = np.zeros(1 << n_qubits, dtype=complex)
    amplitudes[index] = 1.0
    return StateVector(n_qubits, amplitudes)


def _apply_single(state: StateVector, matrix: np.ndarray, q: int) -> StateVector:
    _check_qubit(state, q)
    n = state.n_qubits
    lead = state.amplitudes.shape[:-1]
    a = state.amplitudes.reshape(lead + (1 << q, 2, 1 << (n - q - 1)))
    a0, a1 = a[..., 0, :], a[..., 1, :]
    out = np.stack((matrix[0, 0] * a0 + matrix[0, 1] * a1, matrix[1, 0] * a0 + matrix[1, 1] * a1), axis=-2)
    return _new(state, out.reshape(state.amplitudes.shape))


def ry_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    return np.array([[c, -s], [s, c]], dtype=complex)


def apply_ry(state: StateVector, q: int, theta: float) -> StateVector:
    return _apply_single(state, ry_matrix(theta), q)


def apply_hadamard(state: StateVector, q: int) -> StateVector:
    return _apply_single(state, _HADAMARD, q)


def _bit(indices: np.ndarray, n: int, q: int) -> np.ndarray:
    return (indices >> (n - 1 - q)) & 1


@lru_cache(maxsize=256)
def _cnot_permutation(n: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(1 << n)
    perm = idx ^ (_bit(idx, n, control) << (n - 1 - target))
    perm.setflags(write=False)
    return perm


@lru_cache(maxsize=256)
def _cswap_permutation(n: int, control: int, a: int, b: int) -> np.ndarray:
    idx = np.arange(1 << n)
    differ = _bit(idx, n, a) ^ _bit(idx, n, b)
    flip = _bit(idx, n, control) & differ
    perm = idx ^ ((flip << (n - 1 - a)) | (flip << (n - 1 - b)))
    perm.setflags(write=False)
    return perm


@lru_cache(maxsize=256)
def _flip_permutation(n: int, mask: int) -> np.ndarray:
    perm = np.arange(1 << n) ^ mask
    perm.setflags(write=False)
    return perm


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    _check_qubit(state, control)
    _check_qubit(state, target)
    if control == target:
        raise ArgumentError("control and target must differ")
    # all three permutations here are involutions, so gather == scatter
    return _new(state, state.amplitudes[..., _cnot_permutation(state.n_qubits, control, target)])


def apply_cswap(state: StateVector, control: int, a: int, b: int) -> StateVector:
    for q in (control, a, b):
        _check_qubit(state, q)
    if len({control, a, b}) != 3:
        raise ArgumentError(f"control/a/b must be pairwise distinct, got {(control, a, b)}")
    return _new(state, state.amplitudes[..., _cswap_permutation(state.n_qubits, control, a, b)])


def _marginal(state: StateVector, q: int) -> Tuple[np.ndarray, np.ndarray]:
    _check_qubit(state, q)
    n = state.n_qubits
    lead = state.amplitudes.shape[:-1]
    probs = state.probabilities().reshape(lead + (1 << q, 2, 1 << (n - q - 1)))
    return probs[..., 0, :].sum(axis=(-2, -1)), probs[..., 1, :].sum(axis=(-2, -1))


def expect_z(state: StateVector, q: int) -> np.ndarray | float:
    p0, p1 = _marginal(state, q)
    return _unbatch(p0 - p1)


def prob_zero(state: StateVector, q: int) -> np.ndarray | float:
    return _unbatch(0.5 * (1.0 + np.asarray(expect_z(state, q))))


def sample_prob_zero(state: StateVector, q: int, shots: int, rng: np.random.Generator) -> np.ndarray | float:
    """Shot-sampled estimate of prob_zero: a seeded binomial draw per state."""
    if shots < 1:
        raise ArgumentError(f"shots must be >= 1, got {shots}")
    p = np.clip(np.asarray(prob_zero(state, q)), 0.0, 1.0)
    return _unbatch(rng.binomial(shots, p) / shots)


def tensor(a: StateVector, b: StateVector) -> StateVector:
    """Kronecker product; ``a`` takes the lower qubit indices."""
    n = a.n_qubits + b.n_qubits
    if n > settings.max_qubits:
        raise CapacityError(f"combined register of {n} qubits exceeds the cap of {settings.max_qubits}")
    amps = a.amplitudes[..., :, None] * b.amplitudes[..., None, :]
    return StateVector(n, amps.reshape(amps.shape[:-2] + (-1,)))


def reset_branches(state: StateVector, qubits: Sequence[int]) -> List[Tuple[np.ndarray | float, StateVector]]:
    """Exact branch decomposition of resetting ``qubits`` to |0>.

    For every outcome k on the reset qubits the state is projected, renormalized
    and the reset qubits are flipped back to |0>. The returned weights are the
    outcome probabilities and sum to 1; the mixture of branches is the reset
    channel's output. Zero-weight branches carry |0...0> as a placeholder.
    """
    for q in qubits:
        _check_qubit(state, q)
    if len(set(qubits)) != len(qubits):
        raise ArgumentError(f"repeated qubits in reset: {list(qubits)}")
    n = state.n_qubits
    idx = np.arange(1 << n)
    branches = []
    for outcome in range(1 << len(qubits)):
        bits = [(outcome >> (len(qubits) - 1 - i)) & 1 for i in range(len(qubits))]
        keep = np.ones(1 << n, dtype=bool)
        flip = 0
        for q, bit in zip(qubits, bits):
            keep &= _bit(idx, n, q) == bit
            flip |= bit << (n - 1 - q)
        projected = np.where(keep, state.amplitudes, 0.0)
        weight = np.sum(np.abs(projected) ** 2, axis=-1)
        norm = np.sqrt(weight)
        safe = np.where(norm > 0.0, norm, 1.0)
        amps = projected[..., _flip_permutation(n, flip)] / safe[..., None]
        amps[..., 0] = np.where(norm > 0.0, amps[..., 0], 1.0)
        branches.append((_unbatch(weight), StateVector(n, amps)))
    return branches


@lru_cache(maxsize=64)
def _register_swap_permutation(n: int, pairs: Tuple[Tuple[int, int], ...]) -> np.ndarray:
    idx = np.arange(1 << n)
    perm = idx.copy()
    for a, b in pairs:
        differ = _bit(perm, n, a) ^ _bit(perm, n, b)
        perm = perm ^ ((differ << (n - 1 - a)) | (differ << (n - 1 - b)))
    perm.setflags(write=False)
    return perm


def _check_pairs(state: StateVector, pairs: Sequence[Tuple[int, int]]) -> Tuple[Tuple[int, int], ...]:
    pairs = tuple((int(a), int(b)) for a, b in pairs)
    flat = [q for pair in pairs for q in pair]
    for q in flat:
        _check_qubit(state, q)
    if len(set(flat)) != len(flat):
        raise ArgumentError(f"swap pairs must not share qubits, got {list(pairs)}")
    return pairs


def swap_test_prob_zero(state: StateVector, pairs: Sequence[Tuple[int, int]]) -> np.ndarray | float:
    """prob_zero of a SWAP-test ancilla run over ``pairs`` of ``state``.

    Same result as appending an ancilla in |0>, applying H, one CSWAP per pair
    and H, then reading prob_zero on it. The ancilla is kept implicit: after
    those gates its |0> branch holds (psi + S psi) / 2, S being the pairwise
    swaps, so only a 2**n register is touched.
    """
    pairs = _check_pairs(state, pairs)
    amps = state.amplitudes
    branch = amps + amps[..., _register_swap_permutation(state.n_qubits, pairs)]
    return _unbatch(0.25 * np.sum(branch.real ** 2 + branch.imag ** 2, axis=-1))


def stack(states: Sequence[StateVector]) -> StateVector:
    """Concatenate states (single or batched) of one width along the batch axis."""
    if not states:
        raise ArgumentError("nothing to stack")
    n = states[0].n_qubits
    if any(s.n_qubits != n for s in states):
        raise DimensionError(f"cannot stack states of widths {sorted({s.n_qubits for s in states})}")
    return StateVector(n, np.concatenate([s.amplitudes.reshape(-1, 1 << n) for s in states], axis=0))
