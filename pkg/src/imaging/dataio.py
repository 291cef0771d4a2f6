"""Dataset loading, 32x32 downscaling and the seeded synthetic texture dataset.

MVTec-style layout under ``root/category``::

    train/good/*            normal training images
    val/good/*              optional; otherwise validation comes from train/good
    test/<kind>/*           test images, ``good`` for normal ones
    ground_truth/<kind>/*   masks named ``<stem>_mask.<ext>`` (or ``<stem>.<ext>``)

Files are visited in lexicographic order. PGM files are decoded by
``src.imaging.pgm`` (Pillow's PPM plugin); other formats go straight to ``Image.open``.
"""
import json
import logging
import pathlib
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from PIL import Image
from scipy import ndimage

from src.app.errors import ArgumentError, DataError, LayoutError
from src.app.schemas import SynthSpec
from src.app.settings import settings
from src.imaging.patchflow import ImageTensor
from src.imaging.pgm import read_pgm, write_pgm
from src.training.logger import log_method_entry

logger = logging.getLogger(__name__)

TARGET_SIZE = 32
IMAGE_SUFFIXES = {".pgm", ".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}
MaskRule = Literal["threshold", "any"]


@dataclass
class DatasetSplit:
    """Train/val hold normal images only; every test image carries a mask (all zero when normal)."""

    train: List[ImageTensor] = field(default_factory=list)
    val: List[ImageTensor] = field(default_factory=list)
    test: List[Tuple[ImageTensor, np.ndarray]] = field(default_factory=list)
    names: Dict[str, List[str]] = field(default_factory=lambda: {"train": [], "val": [], "test": []})
    test_kinds: List[str] = field(default_factory=list)
    seed: int = 0

    @property
    def test_images(self) -> List[ImageTensor]:
        return [img for img, _ in self.test]

    @property
    def test_masks(self) -> List[np.ndarray]:
        return [mask for _, mask in self.test]

    def manifest(self) -> dict:
        return {
            "seed": self.seed,
            "counts": {"train": len(self.train), "val": len(self.val), "test": len(self.test)},
            "names": self.names,
            "test_kinds": self.test_kinds,
        }


# ---------------------------------------------------------------- file reading


def _image_files(directory: pathlib.Path) -> List[pathlib.Path]:
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def read_gray(path: pathlib.Path) -> np.ndarray:
    """Grayscale float image in [0, 1]; multi-channel inputs are channel-averaged."""
    path = pathlib.Path(path)
    if path.suffix.lower() == ".pgm":
        raw = read_pgm(path)
        return raw.astype(float) / np.iinfo(raw.dtype).max
    try:
        with Image.open(path) as im:
            arr = np.asarray(im)
    except OSError as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    if arr.ndim == 3:
        arr = arr[..., :3].astype(float).mean(axis=-1) if arr.shape[-1] >= 3 else arr[..., 0]
    scale = 65535.0 if arr.dtype == np.uint16 or np.max(arr, initial=0) > 255 else 255.0
    if arr.dtype == bool:
        scale = 1.0
    return np.clip(np.asarray(arr, dtype=float) / scale, 0.0, 1.0)


# ---------------------------------------------------------------- resizing


def _box_resize(arr: np.ndarray, size: int) -> np.ndarray:
    h, w = arr.shape
    if (h, w) == (size, size):
        return arr.copy()
    if h % size == 0 and w % size == 0:
        return arr.reshape(size, h // size, size, w // size).mean(axis=(1, 3))
    resized = Image.fromarray(arr.astype(np.float32), mode="F").resize((size, size), resample=Image.BOX)
    return np.asarray(resized, dtype=float)


def resize_to_32(img: ImageTensor | np.ndarray, size: int = TARGET_SIZE) -> ImageTensor:
    """Box-filter area averaging to ``size`` x ``size``; exact block means for integer ratios."""
    arr = np.asarray(img.pixels if isinstance(img, ImageTensor) else img, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ArgumentError(f"resize_to_32 needs a square image, got shape {arr.shape}")
    return ImageTensor(np.clip(_box_resize(arr, size), 0.0, 1.0))


def resize_mask(mask: np.ndarray, size: int = TARGET_SIZE, rule: MaskRule = "threshold") -> np.ndarray:
    """Resize with the image geometry then re-binarize at the threshold, or mark any overlap."""
    coverage = _box_resize(np.asarray(mask, dtype=float), size)
    if rule == "any":
        return (coverage > 0.0).astype(np.uint8)
    return (coverage >= settings.mask_binarize_threshold).astype(np.uint8)


def _load_image(path: pathlib.Path, stretch: bool = False) -> ImageTensor:
    arr = read_gray(path)
    if stretch and arr.shape[0] != arr.shape[1]:
        return ImageTensor(np.clip(_box_resize(arr, TARGET_SIZE), 0.0, 1.0))
    return resize_to_32(arr)


def _load_mask(paths: Sequence[pathlib.Path], rule: MaskRule) -> np.ndarray:
    combined = None
    for p in paths:
        m = read_gray(p) > 0.0
        if combined is not None and m.shape != combined.shape:
            raise DataError(f"mask {p} has shape {m.shape}, expected {combined.shape}")
        combined = m if combined is None else combined | m
    return resize_mask(combined, rule=rule)


def _mask_paths(gt_dir: pathlib.Path, stem: str) -> List[pathlib.Path]:
    if not gt_dir.is_dir():
        return []
    return [
        p
        for p in _image_files(gt_dir)
        if p.stem == stem or p.stem == f"{stem}_mask" or p.stem.startswith(f"{stem}_mask_")
    ]


def _require_dir(path: pathlib.Path) -> pathlib.Path:
    if not path.is_dir():
        raise LayoutError(f"missing directory {path}")
    return path


def _split_normals(
    files: List[pathlib.Path], rng: np.random.Generator, n_train: int, n_val: int
) -> Tuple[List[pathlib.Path], List[pathlib.Path]]:
    order = rng.permutation(len(files))
    picked = [files[i] for i in order]
    train = sorted(picked[:n_train])
    val = sorted(picked[n_train : n_train + n_val])
    return train, val


# ---------------------------------------------------------------- loaders


@log_method_entry(run_type="data")
def load_mvtec_layout(
    root_path: pathlib.Path,
    category: str,
    seed: int = 0,
    n_train: int = 100,
    n_val: int = 25,
    mask_rule: MaskRule = "threshold",
) -> DatasetSplit:
    """Load one category; train/val are seeded subsamples of the normal images capped at 100/25."""
    base = _require_dir(pathlib.Path(root_path) / category)
    train_files = _image_files(_require_dir(base / "train" / "good"))
    test_dir = _require_dir(base / "test")
    gt_dir = base / "ground_truth"
    rng = np.random.default_rng(seed)

    val_dir = base / "val" / "good"
    if val_dir.is_dir():
        train_sel = sorted(train_files[i] for i in rng.permutation(len(train_files))[:n_train])
        val_files = _image_files(val_dir)
        val_sel = sorted(val_files[i] for i in rng.permutation(len(val_files))[:n_val])
    else:
        train_sel, val_sel = _split_normals(train_files, rng, n_train, n_val)

    split = DatasetSplit(seed=seed)
    for p in train_sel:
        split.train.append(_load_image(p))
        split.names["train"].append(p.name)
    for p in val_sel:
        split.val.append(_load_image(p))
        split.names["val"].append(p.name)

    for kind_dir in sorted(d for d in test_dir.iterdir() if d.is_dir()):
        kind = kind_dir.name
        for p in _image_files(kind_dir):
            img = _load_image(p)
            masks = _mask_paths(gt_dir / kind, p.stem)
            if masks:
                mask = _load_mask(masks, mask_rule)
            elif kind == "good":
                mask = np.zeros((img.height, img.width), dtype=np.uint8)
            else:
                raise DataError(f"no ground-truth mask for anomalous test image {p}")
            if mask.shape != (img.height, img.width):
                raise DataError(f"mask for {p} has shape {mask.shape} after resize, image is {img.pixels.shape}")
            split.test.append((img, mask))
            split.names["test"].append(f"{kind}/{p.name}")
            split.test_kinds.append(kind)

    logger.info(
        f"loaded {category}: train={len(split.train)} val={len(split.val)} test={len(split.test)} from {base}"
    )
    return split


@log_method_entry(run_type="data")
def load_busi_layout(
    root_path: pathlib.Path,
    seed: int = 0,
    n_train: int = 100,
    n_val: int = 25,
    n_test: int = 100,
    merge_categories: bool = True,
    mask_rule: MaskRule = "threshold",
) -> DatasetSplit:
    """Breast-ultrasound layout: ``normal/``, ``benign/``, ``malignant/`` with ``<stem>_mask*.png`` masks.

    Normal images feed train/val. The test set is a seeded subset of ``n_test``
    anomalous images keeping the benign/malignant ratio; with
    ``merge_categories=False`` only malignant images are treated as anomalous.
    Several masks for one image are OR-combined. Images are resized to 32x32
    whatever their aspect ratio.
    """
    root = pathlib.Path(root_path)
    rng = np.random.default_rng(seed)

    def images_in(kind: str) -> List[pathlib.Path]:
        return [p for p in _image_files(_require_dir(root / kind)) if "_mask" not in p.stem]

    train_sel, val_sel = _split_normals(images_in("normal"), rng, n_train, n_val)
    kinds = ["benign", "malignant"] if merge_categories else ["malignant"]
    pools = {kind: images_in(kind) for kind in kinds}
    total = sum(len(v) for v in pools.values())
    wanted = min(n_test, total)

    picked: List[Tuple[str, pathlib.Path]] = []
    remaining = wanted
    for i, kind in enumerate(kinds):
        pool = pools[kind]
        take = remaining if i == len(kinds) - 1 else min(len(pool), int(round(wanted * len(pool) / max(total, 1))))
        take = min(take, len(pool))
        remaining -= take
        picked.extend((kind, pool[j]) for j in sorted(rng.permutation(len(pool))[:take]))

    split = DatasetSplit(seed=seed)
    for p in train_sel:
        split.train.append(_load_image(p, stretch=True))
        split.names["train"].append(p.name)
    for p in val_sel:
        split.val.append(_load_image(p, stretch=True))
        split.names["val"].append(p.name)
    for kind, p in picked:
        masks = [m for m in _mask_paths(root / kind, p.stem) if m != p]
        if not masks:
            raise DataError(f"no mask for {p}")
        split.test.append((_load_image(p, stretch=True), _load_mask(masks, mask_rule)))
        split.names["test"].append(f"{kind}/{p.name}")
        split.test_kinds.append(kind)
    logger.info(f"loaded BUSI: train={len(split.train)} val={len(split.val)} test={len(split.test)} from {root}")
    return split


# ---------------------------------------------------------------- synthetic data


def _texture(kind: str, size: int, rng: np.random.Generator) -> np.ndarray:
    """Textures stay within [0.2, 0.7] so a +/-0.3 defect never saturates."""
    if kind == "stripes":
        period = rng.uniform(4.0, 8.0)
        angle = rng.uniform(0.0, np.pi)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        r, c = np.mgrid[0:size, 0:size]
        wave = np.sin(2.0 * np.pi * (c * np.cos(angle) + r * np.sin(angle)) / period + phase)
        base = 0.45 + 0.2 * wave + rng.uniform(-0.03, 0.03, size=(size, size))
    elif kind == "blobs":
        field_ = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma=2.0, mode="wrap")
        span = np.ptp(field_)
        field_ = (field_ - field_.min()) / span if span > 0 else np.zeros_like(field_)
        base = 0.25 + 0.4 * field_
    elif kind == "uniform-noise":
        base = rng.uniform(0.25, 0.65, size=(size, size))
    else:
        raise ArgumentError(f"unknown texture {kind!r}")
    return np.clip(base, 0.2, 0.7)


def defect_mask(shape: str, size: int, image_size: int, anchor: Tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """Binary mask of one defect whose bounding box is ``size`` x ``size`` at ``anchor``."""
    mask = np.zeros((image_size, image_size), dtype=np.uint8)
    r0, c0 = anchor
    box = np.zeros((size, size), dtype=bool)
    if shape == "square":
        box[:] = True
    elif shape == "ellipse":
        ratio = rng.uniform(0.5, 1.0)
        a = size / 2.0
        b = a * ratio
        rr, cc = np.mgrid[0:size, 0:size] + 0.5
        box = ((rr - a) / b) ** 2 + ((cc - a) / a) ** 2 <= 1.0
    elif shape == "scratch":
        start = rng.uniform(0, size, size=2)
        end = rng.uniform(0, size, size=2)
        t = np.linspace(0.0, 1.0, 4 * size)
        pts = np.clip(np.floor(start[None, :] + t[:, None] * (end - start)[None, :]).astype(int), 0, size - 1)
        box[pts[:, 0], pts[:, 1]] = True
    else:
        raise ArgumentError(f"unknown defect shape {shape!r}")
    mask[r0 : r0 + size, c0 : c0 + size] = box
    return mask


def inject_defect(
    pixels: np.ndarray,
    shape: str,
    size: int,
    delta: float,
    rng: np.random.Generator,
    anchor: Optional[Tuple[int, int]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Add ``delta`` inside one defect region; returns (image, mask)."""
    image_size = pixels.shape[0]
    if size > image_size:
        raise ArgumentError(f"defect size {size} exceeds image size {image_size}")
    if anchor is None:
        anchor = (int(rng.integers(0, image_size - size + 1)), int(rng.integers(0, image_size - size + 1)))
    mask = defect_mask(shape, size, image_size, anchor, rng)
    out = np.clip(pixels + delta * mask, 0.0, 1.0)
    return out, mask


@log_method_entry(run_type="data")
def generate_synthetic(spec: SynthSpec) -> DatasetSplit:
    """Seeded texture-with-defect dataset; (spec, seed) determines every byte."""
    if spec.defect_size > spec.image_size:
        raise ArgumentError(f"defect size {spec.defect_size} exceeds image size {spec.image_size}")
    rng = np.random.default_rng(spec.seed)
    split = DatasetSplit(seed=spec.seed)
    for i in range(spec.n_train):
        split.train.append(ImageTensor(_texture(spec.texture, spec.image_size, rng)))
        split.names["train"].append(f"{i:03d}.pgm")
    for i in range(spec.n_val):
        split.val.append(ImageTensor(_texture(spec.texture, spec.image_size, rng)))
        split.names["val"].append(f"{i:03d}.pgm")

    n_anomalous = int(round(spec.anomaly_fraction * spec.n_test))
    anomalous = set(rng.permutation(spec.n_test)[:n_anomalous].tolist())
    for i in range(spec.n_test):
        base = _texture(spec.texture, spec.image_size, rng)
        if i in anomalous:
            pixels, mask = inject_defect(base, spec.defect, spec.defect_size, spec.defect_intensity_delta, rng)
            kind = spec.defect
        else:
            pixels, mask = base, np.zeros(base.shape, dtype=np.uint8)
            kind = "good"
        split.test.append((ImageTensor(pixels), mask))
        split.names["test"].append(f"{kind}/{i:03d}.pgm")
        split.test_kinds.append(kind)
    logger.info(
        f"synthetic dataset: texture={spec.texture} defect={spec.defect} train={spec.n_train} "
        f"val={spec.n_val} test={spec.n_test} anomalous={n_anomalous}"
    )
    return split


def _to_uint8(img: ImageTensor) -> np.ndarray:
    return np.rint(img.pixels * 255.0).astype(np.uint8)


def write_dataset(split: DatasetSplit, root: pathlib.Path, category: str = "synthetic", extra: Optional[dict] = None) -> pathlib.Path:
    """Write ``split`` in the layout ``load_mvtec_layout`` reads, plus ``manifest.json``."""
    base = pathlib.Path(root) / category
    for img, name in zip(split.train, split.names["train"]):
        write_pgm(base / "train" / "good" / name, _to_uint8(img))
    for img, name in zip(split.val, split.names["val"]):
        write_pgm(base / "val" / "good" / name, _to_uint8(img))
    for (img, mask), name in zip(split.test, split.names["test"]):
        kind, fname = name.split("/", 1)
        write_pgm(base / "test" / kind / fname, _to_uint8(img))
        if kind != "good":
            stem = pathlib.Path(fname).stem
            write_pgm(base / "ground_truth" / kind / f"{stem}_mask.pgm", (np.asarray(mask) * 255).astype(np.uint8))
    manifest = {**split.manifest(), **(extra or {})}
    path = base / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    logger.info(f"dataset written to {base}")
    return path
