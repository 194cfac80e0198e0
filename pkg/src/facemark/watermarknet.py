"""Watermark encoder/decoder networks assembled from tensorgrad layers.

The encoder replicates each message bit into a constant-valued channel at
image resolution, concatenates those channels with the image, runs a stack
of Conv-BN-ReLU blocks, re-concatenates [features, image, message] and maps
back to image channels through a final 3x3 convolution and a sigmoid, so
outputs always land in [0, 1].

The decoder is a deeper Conv-BN-ReLU stack ending in a block with one
channel per message bit, a global average pool (which makes it agnostic to
input size) and a square linear head producing one logit per bit.

Batch normalization uses batch statistics during training and running
statistics at extraction time.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import msgcodec
from . import tensorgrad as tg
from .containers import read_container, write_container

__all__ = [
    "WatermarkConfig",
    "WatermarkModel",
    "build_model",
    "forward_encoder",
    "forward_decoder",
    "encode",
    "decode_logits",
    "extract",
    "save_model",
    "load_model",
    "MODEL_MAGIC",
]

MODEL_MAGIC = b"WMF1"

MIN_DECODE_SIDE = 8


@dataclass(frozen=True)
class WatermarkConfig:
    """Architecture constants for one encoder/decoder pair."""

    message_length: int
    base_channels: int = 64
    encoder_blocks: int = 4
    decoder_blocks: int = 7
    image_channels: int = 3

    def __post_init__(self):
        if not (1 <= self.message_length <= 256):
            raise ValueError(f"message_length must lie in [1, 256], got {self.message_length}")
        if self.base_channels < 1 or self.encoder_blocks < 1 or self.decoder_blocks < 1:
            raise ValueError("base_channels, encoder_blocks and decoder_blocks must be >= 1")
        if self.image_channels not in (1, 3):
            raise ValueError(f"image_channels must be 1 or 3, got {self.image_channels}")


@dataclass
class WatermarkModel:
    config: WatermarkConfig
    encoder: tg.ParamSet
    decoder: tg.ParamSet
    enc_stats: list[tg.RunningStats]
    dec_stats: list[tg.RunningStats]
    step: int = 0


def _conv_bn_names(prefix, i):
    return (
        f"{prefix}.block{i}.conv.weight",
        f"{prefix}.block{i}.conv.bias",
        f"{prefix}.block{i}.bn.gamma",
        f"{prefix}.block{i}.bn.beta",
    )


def _encoder_layout(cfg):
    """Ordered (name, shape) pairs for every encoder parameter."""
    layout = []
    c_in = cfg.image_channels + cfg.message_length
    for i in range(cfg.encoder_blocks):
        wname, bname, gname, bename = _conv_bn_names("enc", i)
        layout += [
            (wname, (cfg.base_channels, c_in, 3, 3)),
            (bname, (cfg.base_channels,)),
            (gname, (cfg.base_channels,)),
            (bename, (cfg.base_channels,)),
        ]
        c_in = cfg.base_channels
    fuse_in = cfg.base_channels + cfg.image_channels + cfg.message_length
    layout += [
        ("enc.out.weight", (cfg.image_channels, fuse_in, 3, 3)),
        ("enc.out.bias", (cfg.image_channels,)),
    ]
    return layout


def _decoder_layout(cfg):
    """Ordered (name, shape) pairs for every decoder parameter."""
    layout = []
    c_in = cfg.image_channels
    for i in range(cfg.decoder_blocks):
        wname, bname, gname, bename = _conv_bn_names("dec", i)
        layout += [
            (wname, (cfg.base_channels, c_in, 3, 3)),
            (bname, (cfg.base_channels,)),
            (gname, (cfg.base_channels,)),
            (bename, (cfg.base_channels,)),
        ]
        c_in = cfg.base_channels
    layout += [
        ("dec.bits.conv.weight", (cfg.message_length, cfg.base_channels, 3, 3)),
        ("dec.bits.conv.bias", (cfg.message_length,)),
        ("dec.bits.bn.gamma", (cfg.message_length,)),
        ("dec.bits.bn.beta", (cfg.message_length,)),
        ("dec.fc.weight", (cfg.message_length, cfg.message_length)),
        ("dec.fc.bias", (cfg.message_length,)),
    ]
    return layout


def _init_value(name, shape, rng):
    if name.endswith(".conv.weight") or name.endswith(".out.weight"):
        fan_in = int(np.prod(shape[1:]))
        return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
    if name.endswith(".fc.weight"):
        fan_in = shape[1]
        return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
    if name.endswith(".gamma"):
        return np.ones(shape)
    return np.zeros(shape)


def _build_skeleton(cfg):
    encoder = tg.ParamSet()
    decoder = tg.ParamSet()
    for name, shape in _encoder_layout(cfg):
        encoder.add(name, np.zeros(shape))
    for name, shape in _decoder_layout(cfg):
        decoder.add(name, np.zeros(shape))
    enc_stats = [tg.RunningStats() for _ in range(cfg.encoder_blocks)]
    dec_stats = [tg.RunningStats() for _ in range(cfg.decoder_blocks + 1)]
    return WatermarkModel(cfg, encoder, decoder, enc_stats, dec_stats)


def build_model(config, seed=0):
    """He-initialized encoder/decoder pair; the same seed reproduces it."""
    model = _build_skeleton(config)
    rng = np.random.default_rng(seed)
    for pset, layout in ((model.encoder, _encoder_layout(config)), (model.decoder, _decoder_layout(config))):
        for name, shape in layout:
            pset[name].value[...] = _init_value(name, shape, rng)
    return model


def _conv_bn_relu(pset, prefix, x, mode, stats):
    h = tg.conv2d(x, pset[f"{prefix}.conv.weight"], pset[f"{prefix}.conv.bias"], stride=1, pad=1)
    h = tg.batchnorm2d(h, pset[f"{prefix}.bn.gamma"], pset[f"{prefix}.bn.beta"], mode=mode, running=stats)
    return tg.relu(h)


def _message_planes(messages, n, h, w, length):
    msgs = np.asarray(messages, dtype=np.float64)
    if msgs.shape != (n, length):
        raise ValueError(f"messages must have shape ({n}, {length}), got {msgs.shape}")
    if not np.all((msgs == 0.0) | (msgs == 1.0)):
        raise ValueError("message bits must be exactly 0 or 1")
    return tg.leaf(np.broadcast_to(msgs[:, :, None, None], (n, length, h, w)).copy())


def forward_encoder(model, images, messages, mode="train"):
    """Batched encoder graph: (N,C,H,W) images + (N,L) bits -> watermarked node.

    In ``train`` mode batch statistics are used and the model's running
    statistics are updated; ``infer`` uses the stored statistics.
    """
    cfg = model.config
    x = images if isinstance(images, tg.Node) else tg.leaf(images)
    n, c, h, w = x.value.shape
    if c != cfg.image_channels:
        raise ValueError(f"encoder expects {cfg.image_channels}-channel images, got {c}")
    msg_node = _message_planes(messages, n, h, w, cfg.message_length)
    out = tg.concat_channels(x, msg_node)
    for i in range(cfg.encoder_blocks):
        out = _conv_bn_relu(model.encoder, f"enc.block{i}", out, mode, model.enc_stats[i])
    fused = tg.concat_channels(tg.concat_channels(out, x), msg_node)
    final = tg.conv2d(fused, model.encoder["enc.out.weight"], model.encoder["enc.out.bias"], stride=1, pad=1)
    return tg.sigmoid(final)


def forward_decoder(model, images, mode="train"):
    """Batched decoder graph: (N,C,H,W) images -> (N,L) logits node."""
    cfg = model.config
    x = images if isinstance(images, tg.Node) else tg.leaf(images)
    n, c, h, w = x.value.shape
    if c != cfg.image_channels:
        raise ValueError(f"decoder expects {cfg.image_channels}-channel images, got {c}")
    if h < MIN_DECODE_SIDE or w < MIN_DECODE_SIDE:
        raise ValueError(f"decoder needs at least {MIN_DECODE_SIDE}x{MIN_DECODE_SIDE} pixels, got {h}x{w}")
    out = x
    for i in range(cfg.decoder_blocks):
        out = _conv_bn_relu(model.decoder, f"dec.block{i}", out, mode, model.dec_stats[i])
    out = _conv_bn_relu(model.decoder, "dec.bits", out, mode, model.dec_stats[cfg.decoder_blocks])
    pooled = tg.global_avg_pool(out)
    return tg.affine(pooled, model.decoder["dec.fc.weight"], model.decoder["dec.fc.bias"])


def _stats_for_mode(model, mode):
    # Public single-image calls must not perturb running statistics: train
    # mode runs stat-free, infer mode reads the stored averages.
    if mode == "infer":
        return model
    return WatermarkModel(
        model.config,
        model.encoder,
        model.decoder,
        [None] * len(model.enc_stats),
        [None] * len(model.dec_stats),
        model.step,
    )


def encode(model, image, message, mode="infer"):
    """Embed a message into one C x H x W image; output shape equals input."""
    if mode not in ("train", "infer"):
        raise ValueError(f"encode: mode must be 'train' or 'infer', got {mode!r}")
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3:
        raise ValueError(f"encode expects a CxHxW image, got shape {img.shape}")
    msg = msgcodec.validate_message(message, model.config.message_length)
    src = _stats_for_mode(model, mode)
    node = forward_encoder(src, img[None], msg[None].astype(np.float64), mode=mode)
    return node.value[0]


def decode_logits(model, image, mode="infer"):
    """Raw per-bit logits for one image of any spatial size >= 8."""
    if mode not in ("train", "infer"):
        raise ValueError(f"decode_logits: mode must be 'train' or 'infer', got {mode!r}")
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3:
        raise ValueError(f"decode_logits expects a CxHxW image, got shape {img.shape}")
    src = _stats_for_mode(model, mode)
    node = forward_decoder(src, img[None], mode=mode)
    return node.value[0]


def extract(model, image):
    """Hard bit decisions for one image (inference-mode decoding)."""
    return msgcodec.logits_to_message(decode_logits(model, image, mode="infer"))


def _stat_tensors(prefix_stats):
    tensors = []
    for name, stats in prefix_stats:
        if stats.populated:
            tensors.append((f"{name}.running_mean", stats.mean))
            tensors.append((f"{name}.running_var", stats.var))
    return tensors


def _stat_names(model):
    cfg = model.config
    names = [(f"enc.block{i}.bn", model.enc_stats[i]) for i in range(cfg.encoder_blocks)]
    names += [(f"dec.block{i}.bn", model.dec_stats[i]) for i in range(cfg.decoder_blocks)]
    names += [("dec.bits.bn", model.dec_stats[cfg.decoder_blocks])]
    return names


def save_model(model, path):
    """Persist parameters, running statistics, config and step counter."""
    tensors = [(name, node.value) for name, node in model.encoder.items()]
    tensors += [(name, node.value) for name, node in model.decoder.items()]
    tensors += _stat_tensors(_stat_names(model))
    write_container(path, MODEL_MAGIC, asdict(model.config), model.step, tensors)


def load_model(path):
    """Inverse of :func:`save_model`; validates names and shapes field by field."""
    config_dict, step, tensors = read_container(path, MODEL_MAGIC)
    try:
        cfg = WatermarkConfig(**config_dict)
    except TypeError as exc:
        raise ValueError(f"{path}: bad config block: {exc}") from exc
    model = _build_skeleton(cfg)
    model.step = step
    expected = dict(_encoder_layout(cfg) + _decoder_layout(cfg))
    for name, shape in expected.items():
        if name not in tensors:
            raise ValueError(f"{path}: missing tensor {name!r}")
        if tensors[name].shape != shape:
            raise ValueError(
                f"{path}: tensor {name!r} has shape {tensors[name].shape}, expected {shape}"
            )
    stat_slots = dict(_stat_names(model))
    for name, arr in tensors.items():
        if name in expected:
            pset = model.encoder if name.startswith("enc.") else model.decoder
            pset[name].value[...] = arr
            continue
        base, _, kind = name.rpartition(".")
        if base not in stat_slots or kind not in ("running_mean", "running_var"):
            raise ValueError(f"{path}: unexpected tensor {name!r}")
        if kind == "running_mean":
            stat_slots[base].mean = arr
        else:
            stat_slots[base].var = arr
    for base, stats in stat_slots.items():
        if (stats.mean is None) != (stats.var is None):
            raise ValueError(f"{path}: running statistics for {base!r} are incomplete")
        if stats.mean is not None:
            want = expected[f"{base}.gamma"]
            if stats.mean.shape != want or stats.var.shape != want:
                raise ValueError(f"{path}: running statistics for {base!r} have wrong shape")
    return model
