"""End-to-end runs on the seeded synthetic dataset. Minutes each; run with ``pytest -m slow``."""
import time

import numpy as np
import pytest

from src.app.main import compare_runs, main
from src.app.run_config import RunConfig
from src.app.schemas import AutoencoderConfig, SynthSpec, TrainConfig
from src.evaluation.metrics import aupro, pixel_auroc
from src.imaging.dataio import generate_synthetic
from src.imaging.patchflow import embed_patches, extract_patches
from src.quantum.ansatz import MpsParams, test_similarity as reconstruction_similarity
from src.training.train import fit, infer_map

pytestmark = pytest.mark.slow

SPEC = SynthSpec(n_train=100, n_val=25, n_test=50, image_size=32, defect="square", defect_size=8, seed=0)


@pytest.fixture(scope="module")
def synthetic():
    return generate_synthetic(SPEC)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_quantum_run_detects_square_defects(synthetic, seed):
    acfg = AutoencoderConfig(patch_size=4, bottleneck_dim=2)
    state = fit(synthetic.train, synthetic.val, TrainConfig(seed=seed), acfg, 4, 1)
    assert state.history[20].train_loss < state.history[1].train_loss

    maps = [infer_map(img, state.best_params, acfg, 4, 1) for img in synthetic.test_images]
    masks = synthetic.test_masks
    assert pixel_auroc(maps, masks) >= 0.75
    assert aupro(maps, masks) >= 0.5

    inside = np.concatenate([m.values[g.astype(bool)] for m, g in zip(maps, masks)])
    outside = np.concatenate([m.values[~g.astype(bool)] for m, g in zip(maps, masks)])
    assert inside.mean() > outside.mean()


def test_quantum_vs_classical_harness(synthetic):
    cfg = RunConfig(patch_size=8, stride=4, bottleneck=2, seeds=[0, 1, 2])
    rows = compare_runs(cfg, synthetic)
    per_seed = [r for r in rows if r.seed is not None]
    assert [r.seed for r in per_seed] == [0, 1, 2]
    assert all(r.quantum_parameters == 10 for r in rows)
    assert all(r.classical_parameters == 584 for r in rows)
    std = next(r for r in rows if r.label == "std")
    assert std.quantum_auroc == pytest.approx(np.std([r.quantum_auroc for r in per_seed]))


def test_repeated_runs_are_bit_identical(tmp_path):
    args = ["--patch-size", "4", "--stride", "2", "--bottleneck", "2", "--epochs", "2", "--seeds", "0", "1"]
    assert main(["train", *args, "--out", str(tmp_path / "a")]) == 0
    assert main(["train", *args, "--out", str(tmp_path / "b")]) == 0
    for name in ("seed_0/checkpoint.json", "seed_1/checkpoint_final.json", "seed_1/loss.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_full_grid_forward_pass_under_50ms(synthetic):
    acfg = AutoencoderConfig(patch_size=4, bottleneck_dim=2)
    params = MpsParams.random(acfg.n_data_qubits, np.random.default_rng(0))
    grid = extract_patches(synthetic.test_images[0], 4, 1)
    states = embed_patches(grid.patches)
    assert states.batch_size == 841
    reconstruction_similarity(states, params, acfg)  # warm the permutation caches
    timings = []
    for _ in range(5):
        start = time.perf_counter()
        reconstruction_similarity(states, params, acfg)
        timings.append(time.perf_counter() - start)
    assert min(timings) < 0.050
