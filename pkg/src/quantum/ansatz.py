"""MPS encoder/decoder and the two SWAP-test circuits built on it.

Training circuit (encoder only):
    [data: n | reference: n_t zeroed | ancilla: 1]
    encoder on data, SWAP test between the trash qubits and the reference.

Test circuit (full autoencoder):
    [processed copy: n | fresh copy: n | ancilla: 1]
    encoder, optional trash reset, decoder on the processed copy, then a SWAP
    test over all n qubit pairs.

All circuit functions accept a single patch state or a batch of them and
return a float or an array accordingly.
"""
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, List, Optional, Tuple

import numpy as np

from src.app.errors import ArgumentError, CapacityError, DimensionError
from src.app.schemas import AutoencoderConfig
from src.app.settings import settings
from src.quantum import statevec as sv
from src.quantum.statevec import StateVector

logger = logging.getLogger(__name__)

SHIFT = np.pi / 2

BlockLayout = List[Tuple[Tuple[int, int], Tuple[int, int]]]


@dataclass(frozen=True)
class MpsParams:
    angles: np.ndarray
    n_data_qubits: int

    def __post_init__(self) -> None:
        if self.n_data_qubits < 2:
            raise ArgumentError(f"the MPS ansatz needs at least 2 data qubits, got {self.n_data_qubits}")
        if self.angles.shape != (2 * (self.n_data_qubits - 1),):
            raise DimensionError(
                f"expected {2 * (self.n_data_qubits - 1)} angles for n={self.n_data_qubits}, "
                f"got shape {self.angles.shape}"
            )
        self.angles.setflags(write=False)

    @classmethod
    def from_angles(cls, angles, n_data_qubits: int) -> "MpsParams":
        return cls(np.array(angles, dtype=float), n_data_qubits)

    @classmethod
    def zeros(cls, n_data_qubits: int) -> "MpsParams":
        return cls(np.zeros(2 * (n_data_qubits - 1)), n_data_qubits)

    @classmethod
    def random(cls, n_data_qubits: int, rng: np.random.Generator) -> "MpsParams":
        """Angles drawn uniformly from [0, 2*pi)."""
        return cls(rng.uniform(0.0, 2.0 * np.pi, size=2 * (n_data_qubits - 1)), n_data_qubits)

    @property
    def n_train(self) -> int:
        return self.angles.shape[0]

    def shifted(self, k: int, delta: float) -> "MpsParams":
        angles = self.angles.copy()
        angles[k] += delta
        return MpsParams(angles, self.n_data_qubits)


def compression_percentage(cfg: AutoencoderConfig) -> Fraction:
    """(1 - 2**BD / P**2) * 100, exact."""
    return (1 - Fraction(2 ** cfg.bottleneck_dim, cfg.patch_size ** 2)) * 100


def mps_block_layout(n_data_qubits: int) -> BlockLayout:
    """Staircase of n-1 blocks: block j acts on qubits (j, j+1) with angles (2j, 2j+1)."""
    if n_data_qubits < 2:
        raise ArgumentError(f"the MPS ansatz needs at least 2 data qubits, got {n_data_qubits}")
    return [((j, j + 1), (2 * j, 2 * j + 1)) for j in range(n_data_qubits - 1)]


def _check_fit(state: StateVector, params: MpsParams, offset: int) -> None:
    if offset < 0 or state.n_qubits - offset < params.n_data_qubits:
        raise DimensionError(
            f"{params.n_data_qubits}-qubit ansatz does not fit a {state.n_qubits}-qubit register at offset {offset}"
        )


def apply_encoder(state: StateVector, params: MpsParams, offset: int = 0) -> StateVector:
    _check_fit(state, params, offset)
    for (a, b), (ka, kb) in mps_block_layout(params.n_data_qubits):
        state = sv.apply_ry(state, offset + a, params.angles[ka])
        state = sv.apply_ry(state, offset + b, params.angles[kb])
        state = sv.apply_cnot(state, offset + a, offset + b)
    return state


def apply_decoder(state: StateVector, params: MpsParams, offset: int = 0) -> StateVector:
    """Exact adjoint of apply_encoder."""
    _check_fit(state, params, offset)
    for (a, b), (ka, kb) in reversed(mps_block_layout(params.n_data_qubits)):
        state = sv.apply_cnot(state, offset + a, offset + b)
        state = sv.apply_ry(state, offset + b, -params.angles[kb])
        state = sv.apply_ry(state, offset + a, -params.angles[ka])
    return state


def _check_patch(patch_state: StateVector, params: MpsParams, cfg: AutoencoderConfig, register: int) -> None:
    if patch_state.n_qubits != cfg.n_data_qubits or params.n_data_qubits != cfg.n_data_qubits:
        raise DimensionError(
            f"patch state has {patch_state.n_qubits} qubits and params cover {params.n_data_qubits}, "
            f"config expects {cfg.n_data_qubits}"
        )
    if register > settings.max_qubits:
        raise CapacityError(f"circuit needs {register} qubits, cap is {settings.max_qubits}")


def _chunked(patch_state: StateVector, bits: int, fn: Callable[[StateVector], np.ndarray | float]):
    """Run ``fn`` over row chunks so a batch never exceeds max_batch_amplitudes."""
    if not patch_state.is_batched:
        return fn(patch_state)
    rows = max(1, settings.max_batch_amplitudes >> bits)
    parts = [np.atleast_1d(fn(patch_state.rows(i, i + rows))) for i in range(0, patch_state.batch_size, rows)]
    return np.concatenate(parts) if parts else np.zeros(0)


def _sampled(value, shots: Optional[int], rng: Optional[np.random.Generator]):
    if shots is None:
        return value
    if rng is None:
        raise ArgumentError("shot sampling needs a seeded rng")
    p = np.clip(np.asarray(value, dtype=float), 0.0, 1.0)
    est = rng.binomial(shots, p) / shots
    return float(est) if np.ndim(est) == 0 else est


def _swap_test_z(register: StateVector, pairs: List[Tuple[int, int]], ancilla: int) -> np.ndarray | float:
    register = sv.apply_hadamard(register, ancilla)
    for a, b in pairs:
        register = sv.apply_cswap(register, ancilla, a, b)
    register = sv.apply_hadamard(register, ancilla)
    return sv.expect_z(register, ancilla)


def _training_z(patch_state: StateVector, params: MpsParams, cfg: AutoencoderConfig) -> np.ndarray | float:
    n, n_t = cfg.n_data_qubits, cfg.n_trash
    register = sv.tensor(patch_state, sv.basis_state(n_t + 1, 0))
    register = apply_encoder(register, params)
    pairs = [(t, n + i) for i, t in enumerate(cfg.trash_qubits)]
    return _swap_test_z(register, pairs, ancilla=n + n_t)


def training_fidelity(
    patch_state: StateVector,
    params: MpsParams,
    cfg: AutoencoderConfig,
    shots: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray | float:
    """<sigma_z> on the ancilla of the trash-vs-reference SWAP test (training score z^p)."""
    register = cfg.n_data_qubits + cfg.n_trash + 1
    _check_patch(patch_state, params, cfg, register)
    z = _chunked(patch_state, register, lambda s: _training_z(s, params, cfg))
    if shots is None:
        return z
    z = 2.0 * np.asarray(_sampled(0.5 * (1.0 + np.asarray(z)), shots, rng)) - 1.0
    return float(z) if z.ndim == 0 else z


def training_gradient(patch_state: StateVector, params: MpsParams, cfg: AutoencoderConfig) -> np.ndarray:
    """Parameter-shift derivative of training_fidelity, shape (n_train,) or (B, n_train)."""
    register = cfg.n_data_qubits + cfg.n_trash + 1
    _check_patch(patch_state, params, cfg, register)
    columns = []
    for k in range(params.n_train):
        plus = _chunked(patch_state, register, lambda s: _training_z(s, params.shifted(k, SHIFT), cfg))
        minus = _chunked(patch_state, register, lambda s: _training_z(s, params.shifted(k, -SHIFT), cfg))
        columns.append(0.5 * (np.asarray(plus) - np.asarray(minus)))
    return np.stack(columns, axis=-1)


def _similarity(
    patch_state: StateVector, encoder: MpsParams, decoder: MpsParams, cfg: AutoencoderConfig
) -> np.ndarray | float:
    n = cfg.n_data_qubits
    processed = apply_encoder(patch_state, encoder)
    if _resets_trash(cfg):
        branches = sv.reset_branches(processed, cfg.trash_qubits)
    else:
        branches = [(1.0, processed)]
    k = len(branches)
    # branch-major rows: row b of branch j sits at j * B + b
    weights = np.stack([np.broadcast_to(np.asarray(w, dtype=float), (patch_state.batch_size,)) for w, _ in branches])
    decoded = apply_decoder(sv.stack([b for _, b in branches]), decoder)
    # the fresh copy is untouched until the SWAP test, so it joins here
    register = sv.tensor(decoded, sv.stack([patch_state] * k))
    p0 = np.asarray(sv.swap_test_prob_zero(register, [(i, n + i) for i in range(n)])).reshape(k, -1)
    total = np.sum(weights * p0, axis=0)
    return total if patch_state.is_batched else float(total[0])


def _resets_trash(cfg: AutoencoderConfig) -> bool:
    return cfg.reset_trash_before_decode and cfg.n_trash > 0


def _similarity_bits(cfg: AutoencoderConfig) -> int:
    """log2 of the amplitudes simulated per patch: two copies, times one row per reset branch."""
    return 2 * cfg.n_data_qubits + (cfg.n_trash if _resets_trash(cfg) else 0)


def test_similarity(
    patch_state: StateVector,
    params: MpsParams,
    cfg: AutoencoderConfig,
    shots: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray | float:
    """prob_zero on the ancilla of the input-vs-reconstruction SWAP test, in [0.5, 1]."""
    register = 2 * cfg.n_data_qubits + 1
    _check_patch(patch_state, params, cfg, register)
    p = _chunked(patch_state, _similarity_bits(cfg), lambda s: _similarity(s, params, params, cfg))
    return _sampled(p, shots, rng)


# pytest would otherwise collect the name above as a test function
test_similarity.__test__ = False


def similarity_gradient(patch_state: StateVector, params: MpsParams, cfg: AutoencoderConfig) -> np.ndarray:
    """Parameter-shift derivative of test_similarity.

    Each angle occurs once in the encoder and once in the decoder; the
    derivative is the sum of the two single-occurrence shift rules.
    """
    register = 2 * cfg.n_data_qubits + 1
    _check_patch(patch_state, params, cfg, register)

    def f(enc: MpsParams, dec: MpsParams):
        return np.asarray(_chunked(patch_state, _similarity_bits(cfg), lambda s: _similarity(s, enc, dec, cfg)))

    columns = []
    for k in range(params.n_train):
        enc_part = f(params.shifted(k, SHIFT), params) - f(params.shifted(k, -SHIFT), params)
        dec_part = f(params, params.shifted(k, SHIFT)) - f(params, params.shifted(k, -SHIFT))
        columns.append(0.5 * (enc_part + dec_part))
    return np.stack(columns, axis=-1)
