"""Invisible image watermarking with robustness and verification evaluation.

Modules by concern:

* :mod:`facemark.tensorgrad` — dense tensors with reverse-mode autodiff,
  the network layers, Adam, and finite-difference gradient checking;
* :mod:`facemark.msgcodec` — watermark messages and bitmap signatures;
* :mod:`facemark.imageops` — PPM/PGM I/O and the transformation suite
  (crop, resize, brightness, contrast, JPEG quantization round trip);
* :mod:`facemark.watermarknet` — the watermark encoder/decoder networks;
* :mod:`facemark.bioeval` — verification scoring, TAR@FAR, EER, Welch's
  t-test, and the toy embedder;
* :mod:`facemark.pipeline` — training loops, dataset watermarking, sweeps,
  verification reports, and file formats;
* :mod:`facemark.cli` — the ``facemark`` command-line tool.
"""

from . import bioeval, cli, containers, imageops, msgcodec, pipeline, tensorgrad, watermarknet

__all__ = [
    "bioeval",
    "cli",
    "containers",
    "imageops",
    "msgcodec",
    "pipeline",
    "tensorgrad",
    "watermarknet",
]

__version__ = "0.1.0"
