"""Orchestration: training loops, dataset watermarking, sweeps, verification.

Everything here is seed-deterministic: one PCG64 stream drives batch
sampling, per-image random messages and augmentation draws during training,
and per-cell transform seeds in sweeps are derived by hashing stable cell
coordinates, so reruns with the same configuration produce byte-identical
output files.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bioeval, imageops, msgcodec
from . import tensorgrad as tg
from . import watermarknet as wm

__all__ = [
    "TrainConfig",
    "DatasetManifest",
    "SweepSpec",
    "SweepCell",
    "WatermarkDatasetResult",
    "read_config",
    "build_train_config",
    "build_sweep_spec",
    "build_verify_options",
    "build_embedder_train_config",
    "load_manifest",
    "save_manifest",
    "load_manifest_images",
    "train_watermark",
    "watermark_dataset",
    "run_sweep",
    "run_verification",
    "write_history",
    "write_sweep_csv",
    "write_reports",
    "default_sweep_spec",
    "HISTORY_HEADER",
    "SWEEP_HEADER",
]

HISTORY_HEADER = "step,recon_loss,decode_loss,bit_acc,psnr"
SWEEP_HEADER = "kind,factor,mean_bit_acc,std,n"

_AUG_KINDS = ("crop", "resize", "brightness", "contrast", "jpeg")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    """Watermark-network training configuration (desk-scale defaults)."""

    steps: int = 2000
    batch_size: int = 16
    image_size: int = 32
    image_channels: int = 3
    message_length: int = 16
    base_channels: int = 64
    encoder_blocks: int = 4
    decoder_blocks: int = 7
    recon_weight: float = 1.0
    decode_weight: float = 1.0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    p_aug: float = 0.5
    aug_kinds: tuple = ("crop", "resize", "jpeg")
    crop_range: tuple = (0.75, 1.0)
    resize_range: tuple = (0.75, 1.0)
    brightness_range: tuple = (1.0, 3.5)
    contrast_range: tuple = (1.0, 3.5)
    jpeg_range: tuple = (75, 100)
    seed: int = 0
    checkpoint_interval: int = 0

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")
        if self.recon_weight < 0 or self.decode_weight < 0:
            raise ValueError("loss weights must be >= 0")
        if not (0.0 <= self.p_aug <= 1.0):
            raise ValueError(f"p_aug must lie in [0, 1], got {self.p_aug}")
        bad = [k for k in self.aug_kinds if k not in _AUG_KINDS]
        if bad:
            raise ValueError(f"unknown augmentation kinds {bad}; expected subset of {_AUG_KINDS}")
        for name, (lo, hi), check in (
            ("crop_range", self.crop_range, lambda v: 0.0 < v <= 1.0),
            ("resize_range", self.resize_range, lambda v: 0.0 < v <= 1.0),
            ("brightness_range", self.brightness_range, lambda v: v > 0.0),
            ("contrast_range", self.contrast_range, lambda v: v > 0.0),
            ("jpeg_range", self.jpeg_range, lambda v: v == int(v) and 1 <= v <= 100),
        ):
            if lo > hi or not (check(lo) and check(hi)):
                raise ValueError(f"{name} ({lo}, {hi}) violates the transform invariants")

    def model_config(self):
        return wm.WatermarkConfig(
            message_length=self.message_length,
            base_channels=self.base_channels,
            encoder_blocks=self.encoder_blocks,
            decoder_blocks=self.decoder_blocks,
            image_channels=self.image_channels,
        )


def read_config(path):
    """Parse a plain-text key=value file; '#' lines are comments."""
    mapping = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if not key:
                raise ValueError(f"{path}:{ln}: empty key")
            if key in mapping:
                raise ValueError(f"{path}:{ln}: duplicate key {key!r}")
            mapping[key] = value
    return mapping


def _convert(key, value, kind):
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "float_pair":
            parts = [float(v) for v in value.split(",")]
            if len(parts) != 2:
                raise ValueError("expected two comma-separated numbers")
            return tuple(parts)
        if kind == "str_list":
            return tuple(v.strip() for v in value.split(",") if v.strip())
        if kind == "float_list":
            return tuple(float(v) for v in value.split(",") if v.strip())
    except ValueError as exc:
        raise ValueError(f"config key {key!r}: cannot parse {value!r} ({exc})") from exc
    raise AssertionError(kind)


_TRAIN_KEYS = {
    "steps": "int",
    "batch_size": "int",
    "image_size": "int",
    "image_channels": "int",
    "message_length": "int",
    "base_channels": "int",
    "encoder_blocks": "int",
    "decoder_blocks": "int",
    "recon_weight": "float",
    "decode_weight": "float",
    "lr": "float",
    "beta1": "float",
    "beta2": "float",
    "eps": "float",
    "p_aug": "float",
    "aug_kinds": "str_list",
    "crop_range": "float_pair",
    "resize_range": "float_pair",
    "brightness_range": "float_pair",
    "contrast_range": "float_pair",
    "jpeg_range": "float_pair",
    "seed": "int",
    "checkpoint_interval": "int",
}


def _typed_mapping(mapping, schema, context):
    unknown = sorted(set(mapping) - set(schema))
    if unknown:
        raise ValueError(f"{context}: unknown keys {unknown}; allowed: {sorted(schema)}")
    return {k: _convert(k, v, schema[k]) for k, v in mapping.items()}


def build_train_config(mapping, seed_override=None):
    kwargs = _typed_mapping(mapping, _TRAIN_KEYS, "train config")
    if seed_override is not None:
        kwargs["seed"] = int(seed_override)
    return TrainConfig(**kwargs)


_SWEEP_KEYS = {
    "seed": "int",
    "repetitions": "int",
    "sweep_kinds": "str_list",
    "crop_grid": "float_list",
    "resize_grid": "float_list",
    "brightness_grid": "float_list",
    "contrast_grid": "float_list",
    "jpeg_grid": "float_list",
}

_VERIFY_KEYS = {
    "seed": "int",
    "far_targets": "float_list",
    "modes": "str_list",
    "pairs_per_id": "int",
    "max_imposter": "int",
}

_EMBEDDER_KEYS = {
    "seed": "int",
    "embed_dim": "int",
    "epochs": "int",
    "lr": "float",
    "batch_size": "int",
    "base_channels": "int",
}


@dataclass(frozen=True)
class SweepSpec:
    """Transform kinds with their factor grids, repetitions and base seed."""

    cells: tuple = ()
    repetitions: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        for kind, grid in self.cells:
            for factor in grid:
                imageops.Transform(kind=kind, factor=float(factor))  # validates


_TABLE_GRIDS = {
    "crop": (1.0, 0.95, 0.9, 0.85, 0.8, 0.75),
    "resize": (1.0, 0.95, 0.9, 0.85, 0.8, 0.75),
    "brightness": (1.0, 1.5, 2.0, 2.5, 3.0, 3.5),
    "contrast": (1.0, 1.5, 2.0, 2.5, 3.0, 3.5),
    "jpeg": (100, 95, 90, 85, 80, 75),
}


def default_sweep_spec(seed=0, repetitions=1):
    """The full transformation grid used for the standard robustness table."""
    return SweepSpec(
        cells=tuple((kind, _TABLE_GRIDS[kind]) for kind in ("crop", "resize", "brightness", "contrast", "jpeg")),
        repetitions=repetitions,
        seed=seed,
    )


def build_sweep_spec(mapping, seed_override=None):
    typed = _typed_mapping(mapping, _SWEEP_KEYS, "sweep config")
    seed = int(seed_override) if seed_override is not None else typed.get("seed", 0)
    kinds = typed.get("sweep_kinds", ("crop", "resize", "brightness", "contrast", "jpeg"))
    cells = []
    for kind in kinds:
        grid = typed.get(f"{kind}_grid", _TABLE_GRIDS.get(kind))
        if grid is None:
            raise ValueError(f"sweep config: no grid for kind {kind!r}")
        if kind == "jpeg":
            grid = tuple(int(q) for q in grid)
        cells.append((kind, tuple(grid)))
    return SweepSpec(cells=tuple(cells), repetitions=typed.get("repetitions", 1), seed=seed)


@dataclass(frozen=True)
class VerifyOptions:
    far_targets: tuple = (0.01,)
    modes: tuple = bioeval.PAIRING_MODES
    pairs_per_id: int = 0
    max_imposter: int = 1_000_000
    seed: int = 0


def build_verify_options(mapping, seed_override=None):
    typed = _typed_mapping(mapping, _VERIFY_KEYS, "verify config")
    if seed_override is not None:
        typed["seed"] = int(seed_override)
    for mode in typed.get("modes", ()):  # fail early on typos
        if mode not in bioeval.PAIRING_MODES:
            raise ValueError(f"verify config: unknown pairing mode {mode!r}")
    return VerifyOptions(**typed)


def build_embedder_train_config(mapping, seed_override=None):
    typed = _typed_mapping(mapping, _EMBEDDER_KEYS, "embedder config")
    if seed_override is not None:
        typed["seed"] = int(seed_override)
    return bioeval.EmbedderTrainConfig(**typed)


# ---------------------------------------------------------------------------
# dataset manifests
# ---------------------------------------------------------------------------

@dataclass
class DatasetManifest:
    """Relative image paths with identity labels, rooted at a directory."""

    entries: list
    root: Path
    source_tag: str = "original"

    def __len__(self):
        return len(self.entries)

    def absolute_paths(self):
        return [self.root / rel for rel, _ in self.entries]


def load_manifest(path, require_exists=True):
    """Read a ``path,identity`` CSV; '#' comments allowed.

    A ``# source_tag: <tag>`` comment marks every entry's source; paths are
    resolved relative to the manifest file's directory.
    """
    path = Path(path)
    entries = []
    source_tag = "original"
    with open(path, "r", encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if body.startswith("source_tag:"):
                    source_tag = body.partition(":")[2].strip()
                continue
            rel, sep, identity = line.partition(",")
            if not sep or not identity.strip():
                raise ValueError(f"{path}:{ln}: expected 'path,identity', got {line!r}")
            entries.append((rel.strip(), identity.strip()))
    if not entries:
        raise ValueError(f"{path}: manifest lists no images")
    manifest = DatasetManifest(entries=entries, root=path.parent, source_tag=source_tag)
    if require_exists:
        missing = [str(p) for p in manifest.absolute_paths() if not p.exists()]
        if missing:
            raise FileNotFoundError(f"{path}: missing image files: {', '.join(missing[:5])}")
    return manifest


def save_manifest(manifest, path):
    """Write a manifest CSV next to its images (paths stay relative)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# source_tag: {manifest.source_tag}\n")
        for rel, identity in manifest.entries:
            fh.write(f"{rel},{identity}\n")


def _load_image(path, channels):
    if channels == 3:
        return imageops.load_ppm(path)
    return imageops.load_pgm(path)


def load_manifest_images(manifest, channels=3):
    """Load every manifest image as a (M, C, H, W) stack (sizes must agree)."""
    images = [_load_image(p, channels) for p in manifest.absolute_paths()]
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise ValueError(f"manifest images have mixed shapes: {sorted(shapes)}")
    return np.stack(images)


# ---------------------------------------------------------------------------
# watermark training
# ---------------------------------------------------------------------------

def _uniform_in(rng, lo, hi):
    return float(lo + (hi - lo) * rng.random())


def _apply_training_augmentation(node, kind, config, rng):
    """One augmentation drawn inside the training graph.

    Crop/resize/brightness/contrast run as differentiable ops; the JPEG
    round trip is non-differentiable, so it runs under a straight-through
    estimator (forward transforms, backward passes gradients unchanged).
    """
    n, c, h, w = node.value.shape
    if kind == "crop":
        ratio = _uniform_in(rng, *config.crop_range)
        out_h, out_w = max(1, int(ratio * h)), max(1, int(ratio * w))
        if out_h == h and out_w == w:
            return node
        top = int(rng.integers(0, h - out_h + 1))
        left = int(rng.integers(0, w - out_w + 1))
        return tg.crop_spatial(node, top, left, out_h, out_w)
    if kind == "resize":
        ratio = _uniform_in(rng, *config.resize_range)
        out_h, out_w = max(1, int(ratio * h)), max(1, int(ratio * w))
        if out_h == h and out_w == w:
            return node
        return tg.resize_bilinear(node, out_h, out_w)
    if kind == "brightness":
        return tg.adjust_brightness(node, _uniform_in(rng, *config.brightness_range))
    if kind == "contrast":
        weights = imageops.LUMA_WEIGHTS if c == 3 else np.array([1.0])
        return tg.adjust_contrast(node, _uniform_in(rng, *config.contrast_range), weights)
    if kind == "jpeg":
        lo, hi = config.jpeg_range
        quality = int(rng.integers(int(lo), int(hi) + 1))

        def roundtrip(batch):
            return np.stack([imageops.jpeg_roundtrip(batch[i], quality) for i in range(batch.shape[0])])

        return tg.straight_through(node, roundtrip, op="jpeg_straight_through")
    raise AssertionError(kind)


def train_watermark(config, images, model=None, checkpoint_dir=None):
    """Joint encoder/decoder training on random messages.

    Per step: sample a batch, embed a fresh random message per image, with
    probability ``p_aug`` push the watermarked batch through one randomly
    drawn augmentation, decode, and take an Adam step on
    ``recon_weight * mse + decode_weight * bce``. Reconstruction loss always
    compares the pre-transform watermarked batch with the input batch.

    Returns the model and a per-step metrics history (also carrying the
    total loss for bookkeeping beyond the CSV schema).
    """
    data = np.asarray(images, dtype=np.float64)
    if data.ndim != 4 or data.shape[0] == 0:
        raise ValueError(f"training images must be a non-empty (M,C,H,W) array, got shape {data.shape}")
    m, c, h, w_ = data.shape
    if c != config.image_channels or h != config.image_size or w_ != config.image_size:
        raise ValueError(
            f"training images are {c}x{h}x{w_}, config expects "
            f"{config.image_channels}x{config.image_size}x{config.image_size}"
        )
    if data.min() < 0.0 or data.max() > 1.0:
        raise ValueError("training images must lie in [0, 1]")

    if model is None:
        model = wm.build_model(config.model_config(), seed=config.seed)
    length = model.config.message_length
    rng = np.random.default_rng(config.seed)
    history = []
    checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if checkpoint_dir is not None:
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    for _ in range(config.steps):
        idx = rng.integers(0, m, size=config.batch_size)
        batch = data[idx]
        msgs = rng.integers(0, 2, size=(config.batch_size, length)).astype(np.float64)

        watermarked = wm.forward_encoder(model, batch, msgs, mode="train")
        recon = tg.mse_loss(watermarked, tg.leaf(batch))

        decoded_input = watermarked
        if config.p_aug > 0.0 and config.aug_kinds:
            if rng.random() < config.p_aug:
                kind = config.aug_kinds[int(rng.integers(0, len(config.aug_kinds)))]
                decoded_input = _apply_training_augmentation(watermarked, kind, config, rng)
        logits = wm.forward_decoder(model, decoded_input, mode="train")
        decode = tg.bce_logits_loss(logits, msgs)
        total = tg.add(tg.scale(recon, config.recon_weight), tg.scale(decode, config.decode_weight))
        if not np.isfinite(total.value):
            raise RuntimeError(
                f"training diverged at step {model.step + 1}: "
                f"recon={float(recon.value)}, decode={float(decode.value)}"
            )
        tg.backward(total)
        tg.adam_step(model.encoder, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
        tg.adam_step(model.decoder, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
        model.step += 1

        decisions = (logits.value > 0.0).astype(np.float64)
        bit_acc = float(np.mean(decisions == msgs))
        psnr_vals = [imageops.psnr(batch[i], watermarked.value[i]) for i in range(config.batch_size)]
        history.append(
            {
                "step": model.step,
                "recon_loss": float(recon.value),
                "decode_loss": float(decode.value),
                "bit_acc": bit_acc,
                "psnr": float(np.mean(psnr_vals)),
                "total_loss": float(total.value),
            }
        )
        if checkpoint_dir is not None and config.checkpoint_interval > 0 and model.step % config.checkpoint_interval == 0:
            wm.save_model(model, checkpoint_dir / f"checkpoint_step{model.step}.wmf")

    return model, history


def write_history(history, path):
    """Training metrics CSV with the fixed 5-column schema."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(HISTORY_HEADER + "\n")
        for row in history:
            fh.write(
                f"{row['step']},{row['recon_loss']!r},{row['decode_loss']!r},"
                f"{row['bit_acc']!r},{row['psnr']!r}\n"
            )


# ---------------------------------------------------------------------------
# dataset watermarking
# ---------------------------------------------------------------------------

@dataclass
class WatermarkDatasetResult:
    manifest: DatasetManifest
    manifest_path: Path
    mean_psnr: float
    written: int
    failed: list = field(default_factory=list)


def watermark_dataset(model, manifest, message, out_dir):
    """Embed one fixed message into every manifest image.

    Outputs mirror the input tree under ``out_dir`` (same relative paths)
    and the emitted manifest carries the ``watermarked`` source tag.
    Unreadable images are recorded and skipped; more than 10% failures
    aborts. The reported PSNR compares each original with its 8-bit
    quantized watermarked copy, i.e. with what lands on disk.
    """
    msg = msgcodec.validate_message(message, model.config.message_length)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    channels = model.config.image_channels

    written_entries = []
    failed = []
    psnrs = []
    for rel, identity in manifest.entries:
        src = manifest.root / rel
        try:
            image = _load_image(src, channels)
        except (OSError, ValueError) as exc:
            failed.append((str(src), str(exc)))
            continue
        marked = wm.encode(model, image, msg, mode="infer")
        dest = out_dir / rel
        dest.parent.mkdir(parents=True, exist_ok=True)
        if channels == 3:
            imageops.save_ppm(marked, dest)
        else:
            imageops.save_pgm(marked, dest)
        quantized = np.floor(marked * 255.0 + 0.5).clip(0, 255) / 255.0
        psnrs.append(imageops.psnr(image, quantized))
        written_entries.append((rel, identity))

    total = len(manifest.entries)
    if failed and len(failed) > 0.1 * total:
        raise RuntimeError(
            f"watermark_dataset: {len(failed)}/{total} images unreadable; first: {failed[0][0]}"
        )
    if not written_entries:
        raise RuntimeError("watermark_dataset: no images could be processed")

    out_manifest = DatasetManifest(entries=written_entries, root=out_dir, source_tag="watermarked")
    manifest_path = out_dir / "manifest.csv"
    save_manifest(out_manifest, manifest_path)
    return WatermarkDatasetResult(
        manifest=out_manifest,
        manifest_path=manifest_path,
        mean_psnr=float(np.mean(psnrs)),
        written=len(written_entries),
        failed=failed,
    )


# ---------------------------------------------------------------------------
# robustness sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepCell:
    kind: str
    factor: float
    mean_bit_acc: float
    std: float
    n: int
    reason: str | None = None


def _derive_seed(base_seed, *coordinates):
    """Stable 63-bit seed from the base seed and cell coordinates."""
    text = ":".join([str(base_seed)] + [str(c) for c in coordinates])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def run_sweep(model, images_or_manifest, message, spec=None):
    """Bit accuracy per (transform kind, factor) cell over a fixed message.

    Every image is watermarked once; each cell applies its transform (with
    a per-cell derived seed for random crops) and decodes. A failing cell
    is recorded as NaN with its reason rather than aborting the sweep.
    """
    spec = spec if spec is not None else default_sweep_spec()
    msg = msgcodec.validate_message(message, model.config.message_length)
    if isinstance(images_or_manifest, DatasetManifest):
        images = load_manifest_images(images_or_manifest, model.config.image_channels)
    else:
        images = np.asarray(images_or_manifest, dtype=np.float64)
    if images.ndim != 4 or images.shape[0] == 0:
        raise ValueError("sweep needs a non-empty (M,C,H,W) image stack")

    marked = [wm.encode(model, images[i], msg, mode="infer") for i in range(images.shape[0])]

    cells = []
    for kind, grid in spec.cells:
        for fi, factor in enumerate(grid):
            accs = []
            reason = None
            try:
                for rep in range(spec.repetitions):
                    for i, image in enumerate(marked):
                        seed = _derive_seed(spec.seed, kind, fi, rep, i)
                        transform = imageops.Transform(kind=kind, factor=float(factor), seed=seed)
                        attacked = imageops.apply_transform(image, transform)
                        recovered = wm.extract(model, attacked)
                        accs.append(msgcodec.bit_accuracy(msg, recovered))
                mean = float(np.mean(accs))
                std = float(np.std(accs))
            except (ValueError, RuntimeError) as exc:
                mean, std, reason = float("nan"), float("nan"), str(exc)
            cells.append(
                SweepCell(kind=kind, factor=factor, mean_bit_acc=mean, std=std, n=len(accs), reason=reason)
            )
    return cells


def write_sweep_csv(cells, path):
    """Sweep table CSV with the fixed header ``kind,factor,mean_bit_acc,std,n``."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(SWEEP_HEADER + "\n")
        for cell in cells:
            factor = repr(int(cell.factor)) if float(cell.factor).is_integer() and cell.kind == "jpeg" else repr(float(cell.factor))
            fh.write(f"{cell.kind},{factor},{cell.mean_bit_acc!r},{cell.std!r},{cell.n}\n")


# ---------------------------------------------------------------------------
# verification experiments
# ---------------------------------------------------------------------------

def run_verification(embeddings, options=VerifyOptions(), baseline=None):
    """One report per (pairing mode, FAR target).

    When a baseline score set is supplied (or derivable as the
    original-original mode) each report carries a two-sided Welch t-test
    between the baseline genuine scores and the mode's genuine scores. A
    FAR target that the imposter sample cannot resolve yields a report with
    an error record instead of failing the run.
    """
    dims = {e.vector.shape[0] for e in embeddings}
    if len(dims) > 1:
        raise ValueError(f"embeddings have inconsistent dimensions: {sorted(dims)}")

    score_sets = {}
    for mode in options.modes:
        score_sets[mode] = bioeval.pair_scores(
            embeddings,
            mode,
            pairs_per_id=options.pairs_per_id,
            seed=options.seed,
            max_imposter=options.max_imposter,
        )
    if baseline is None and "original-original" in score_sets:
        baseline = score_sets["original-original"]

    reports = []
    for mode in options.modes:
        scores = score_sets[mode]
        eer_value = bioeval.eer(scores)
        stats = {
            "genuine_mean": float(scores.genuine.mean()),
            "genuine_std": float(scores.genuine.std(ddof=1)) if scores.genuine.size > 1 else 0.0,
            "genuine_count": int(scores.genuine.size),
            "imposter_mean": float(scores.imposter.mean()),
            "imposter_std": float(scores.imposter.std(ddof=1)) if scores.imposter.size > 1 else 0.0,
            "imposter_count": int(scores.imposter.size),
        }
        t_stat = t_df = t_p = None
        if baseline is not None:
            t_stat, t_df, t_p = bioeval.welch_t_test(baseline.genuine, scores.genuine)
        for far in options.far_targets:
            report = bioeval.VerificationReport(
                pairing=mode,
                far_target=float(far),
                eer_value=eer_value,
                t_stat=t_stat,
                t_df=t_df,
                t_p=t_p,
                **stats,
            )
            try:
                tar, tau, achieved = bioeval.tar_at_far(scores, far)
                report.tar, report.tau, report.achieved_far = tar, tau, achieved
            except ValueError as exc:
                report.error = str(exc)
            reports.append(report)
    return reports


_REPORT_FIELDS = (
    ("pairing", "pairing"),
    ("far_target", "far_target"),
    ("tau", "tau"),
    ("achieved_far", "achieved_far"),
    ("tar", "tar"),
    ("eer", "eer_value"),
    ("genuine_mean", "genuine_mean"),
    ("genuine_std", "genuine_std"),
    ("genuine_count", "genuine_count"),
    ("imposter_mean", "imposter_mean"),
    ("imposter_std", "imposter_std"),
    ("imposter_count", "imposter_count"),
    ("t_stat", "t_stat"),
    ("t_df", "t_df"),
    ("t_p", "t_p"),
    ("error", "error"),
)


def write_reports(reports, path):
    """Structured text: one ``key: value`` block per report, blank-line separated."""
    blocks = []
    for report in reports:
        lines = []
        for key, attr in _REPORT_FIELDS:
            value = getattr(report, attr)
            if value is None:
                continue
            if isinstance(value, float):
                lines.append(f"{key}: {value!r}")
            else:
                lines.append(f"{key}: {value}")
        blocks.append("\n".join(lines))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n\n".join(blocks) + "\n")
