"""Embedding-based verification: scoring, operating points, statistics.

Embeddings carry an identity label and a source tag (``original`` or
``watermarked``); genuine/imposter score sets are built per pairing mode
(probe source - reference source). Operating points follow the inclusive
match rule: probe matches reference iff similarity >= threshold.

Vectors are held at 32-bit precision, which is what the text embedding file
format (9 significant digits) round-trips exactly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensorgrad as tg
from .containers import read_container, write_container

__all__ = [
    "Embedding",
    "ScoreSet",
    "VerificationReport",
    "Histogram",
    "EmbedderConfig",
    "EmbedderTrainConfig",
    "EmbedderModel",
    "PAIRING_MODES",
    "cosine_similarity",
    "match_decision",
    "pair_scores",
    "tar_at_far",
    "eer",
    "welch_t_test",
    "regularized_incomplete_beta",
    "student_t_two_sided_p",
    "score_histogram",
    "train_embedder",
    "forward_embedder",
    "embed_images",
    "save_embeddings",
    "load_embeddings",
    "save_embedder",
    "load_embedder",
    "EMBEDDER_MAGIC",
]

PAIRING_MODES = ("original-original", "watermarked-original", "watermarked-watermarked")

EMBEDDER_MAGIC = b"EMB1"


@dataclass
class Embedding:
    """One feature vector with its identity label and source tag."""

    vector: np.ndarray
    identity: str
    source: str = "original"

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float32)
        if self.vector.ndim != 1:
            raise ValueError(f"embedding vector must be 1-D, got shape {self.vector.shape}")
        if not np.all(np.isfinite(self.vector)):
            raise ValueError("embedding vector contains NaN or Inf")
        if not self.identity:
            raise ValueError("embedding is missing its identity label")


@dataclass
class ScoreSet:
    """Genuine and imposter similarity scores for one pairing mode."""

    genuine: np.ndarray
    imposter: np.ndarray
    pairing: str
    skipped_identities: int = 0


@dataclass
class VerificationReport:
    """One operating point plus distribution statistics for a pairing mode."""

    pairing: str
    far_target: float
    tau: float | None = None
    achieved_far: float | None = None
    tar: float | None = None
    eer_value: float | None = None
    genuine_mean: float | None = None
    genuine_std: float | None = None
    genuine_count: int = 0
    imposter_mean: float | None = None
    imposter_std: float | None = None
    imposter_count: int = 0
    t_stat: float | None = None
    t_df: float | None = None
    t_p: float | None = None
    error: str | None = None

    def as_dict(self):
        return asdict(self)


def cosine_similarity(a, b):
    """dot(a, b) / (|a| |b|), clamped to [-1, 1] against rounding."""
    va = np.asarray(a.vector if isinstance(a, Embedding) else a, dtype=np.float64)
    vb = np.asarray(b.vector if isinstance(b, Embedding) else b, dtype=np.float64)
    if va.shape != vb.shape:
        raise ValueError(f"embedding dimensions differ: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity is undefined for a zero-norm vector")
    return float(np.clip(va @ vb / (na * nb), -1.0, 1.0))


def match_decision(score, tau):
    """True iff the probe matches the reference: score >= tau (inclusive)."""
    return score >= tau


def _mode_sources(pairing):
    if pairing not in PAIRING_MODES:
        raise ValueError(f"unknown pairing mode {pairing!r}; expected one of {PAIRING_MODES}")
    probe, _, ref = pairing.partition("-")
    return probe, ref


def pair_scores(embeddings, pairing, pairs_per_id=0, seed=0, max_imposter=1_000_000):
    """Build genuine and imposter cosine scores for one pairing mode.

    Genuine pairs are within-identity probe-reference pairs over distinct
    underlying images; underlying images are matched positionally within
    each (identity, source) group, so mirrored original/watermarked sets
    pair correctly. Symmetric modes use unordered pairs; the asymmetric
    watermarked-original mode uses ordered (probe, reference) pairs.

    ``pairs_per_id`` > 0 caps genuine pairs per identity (seeded choice);
    imposter pairs above ``max_imposter`` are uniformly subsampled.
    """
    probe_src, ref_src = _mode_sources(pairing)
    symmetric = probe_src == ref_src
    rng = np.random.default_rng(seed)

    by_identity: dict[str, dict[str, list[Embedding]]] = {}
    for emb in embeddings:
        by_identity.setdefault(emb.identity, {}).setdefault(emb.source, []).append(emb)

    genuine = []
    skipped = 0
    usable = []
    for identity in sorted(by_identity):
        groups = by_identity[identity]
        probes = groups.get(probe_src, [])
        refs = groups.get(ref_src, [])
        if symmetric:
            pool = probes
            pairs = [(pool[i], pool[j]) for i in range(len(pool)) for j in range(i + 1, len(pool))]
        else:
            pairs = [
                (probes[i], refs[j])
                for i in range(len(probes))
                for j in range(len(refs))
                if i != j
            ]
        if not pairs:
            skipped += 1
            continue
        usable.append(identity)
        if pairs_per_id and len(pairs) > pairs_per_id:
            idx = rng.choice(len(pairs), size=pairs_per_id, replace=False)
            pairs = [pairs[int(i)] for i in idx]
        genuine.extend(cosine_similarity(p, r) for p, r in pairs)

    if not usable:
        raise ValueError(f"no identity has enough images for pairing mode {pairing!r}")
    identities = sorted(by_identity)
    if len(identities) < 2:
        raise ValueError("imposter pairs require at least 2 identities")

    probe_list = [(e, identity) for identity in identities for e in by_identity[identity].get(probe_src, [])]
    ref_list = [(e, identity) for identity in identities for e in by_identity[identity].get(ref_src, [])]
    cross = []
    if symmetric:
        for i in range(len(probe_list)):
            for j in range(i + 1, len(probe_list)):
                if probe_list[i][1] != probe_list[j][1]:
                    cross.append((probe_list[i][0], probe_list[j][0]))
    else:
        for pe, pid in probe_list:
            for re_, rid in ref_list:
                if pid != rid:
                    cross.append((pe, re_))
    if len(cross) > max_imposter:
        idx = rng.choice(len(cross), size=max_imposter, replace=False)
        cross = [cross[int(i)] for i in idx]
    imposter = [cosine_similarity(p, r) for p, r in cross]

    return ScoreSet(
        genuine=np.array(genuine, dtype=np.float64),
        imposter=np.array(imposter, dtype=np.float64),
        pairing=pairing,
        skipped_identities=skipped,
    )


def tar_at_far(scores, far):
    """TAR at the loosest threshold whose false accept rate is <= ``far``.

    Candidate thresholds are the distinct imposter scores; the smallest
    candidate with FAR(tau) <= far wins and the achieved FAR is reported.
    When no candidate qualifies (massive ties), tau is the +inf sentinel
    with TAR 0. Raises when the imposter sample cannot resolve ``far``.
    """
    if not (0.0 < far <= 1.0):
        raise ValueError(f"far must lie in (0, 1], got {far}")
    imp = np.sort(np.asarray(scores.imposter, dtype=np.float64))
    gen = np.asarray(scores.genuine, dtype=np.float64)
    n_imp = imp.size
    n_gen = gen.size
    if n_gen == 0 or n_imp == 0:
        raise ValueError("tar_at_far requires non-empty genuine and imposter sets")
    if n_imp < 1.0 / far:
        raise ValueError(
            f"FAR target {far} is unresolvable with {n_imp} imposter scores; "
            f"need at least {math.ceil(1.0 / far)}"
        )
    candidates, first_idx = np.unique(imp, return_index=True)
    fars = (n_imp - first_idx) / n_imp  # fraction of imposters >= candidate
    ok = np.nonzero(fars <= far)[0]
    if ok.size == 0:
        return 0.0, float("inf"), 0.0
    k = ok[0]
    tau = float(candidates[k])
    achieved = float(fars[k])
    tar = float(np.count_nonzero(gen >= tau) / n_gen)
    return tar, tau, achieved


def eer(scores):
    """Equal error rate under the inclusive match rule.

    Thresholds sweep the union of observed scores; FAR(t) is the fraction
    of imposters >= t and FRR(t) the fraction of genuines < t. The rate at
    the |FAR - FRR| minimum is returned, linearly interpolating between
    adjacent thresholds when the curves cross between samples.
    """
    gen = np.asarray(scores.genuine, dtype=np.float64)
    imp = np.asarray(scores.imposter, dtype=np.float64)
    if gen.size == 0 or imp.size == 0:
        raise ValueError("eer requires non-empty genuine and imposter sets")
    thresholds = np.unique(np.concatenate([gen, imp]))
    imp_sorted = np.sort(imp)
    gen_sorted = np.sort(gen)
    far = 1.0 - np.searchsorted(imp_sorted, thresholds, side="left") / imp.size
    frr = np.searchsorted(gen_sorted, thresholds, side="left") / gen.size
    # Append the point past the largest score so a sign change always exists.
    far = np.append(far, 0.0)
    frr = np.append(frr, 1.0)
    diff = far - frr
    for k in range(diff.size):
        if diff[k] == 0.0:
            return float((far[k] + frr[k]) / 2.0)
        if diff[k] < 0.0:
            if k == 0:
                break
            t = diff[k - 1] / (diff[k - 1] - diff[k])
            far_x = far[k - 1] + (far[k] - far[k - 1]) * t
            frr_x = frr[k - 1] + (frr[k] - frr[k - 1]) * t
            return float((far_x + frr_x) / 2.0)
    k = int(np.argmin(np.abs(diff)))
    return float((far[k] + frr[k]) / 2.0)


# ---------------------------------------------------------------------------
# Welch's t-test
# ---------------------------------------------------------------------------

_BETACF_MAX_ITER = 500
_BETACF_EPS = 1e-14
_BETACF_FPMIN = 1e-300


def _betacf(a, b, x):
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_FPMIN:
        d = _BETACF_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_FPMIN:
            d = _BETACF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETACF_FPMIN:
            c = _BETACF_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_FPMIN:
            d = _BETACF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETACF_FPMIN:
            c = _BETACF_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a, b, x):
    """I_x(a, b) by continued fractions, accurate to ~1e-12 relative."""
    if a <= 0 or b <= 0:
        raise ValueError(f"incomplete beta requires a, b > 0, got a={a}, b={b}")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t, df):
    """Two-sided p-value of Student's t via the regularized incomplete beta."""
    if df <= 0:
        raise ValueError(f"degrees of freedom must be > 0, got {df}")
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def welch_t_test(a, b):
    """Welch's unequal-variance t statistic, Welch-Satterthwaite df, 2-sided p."""
    xa = np.asarray(a, dtype=np.float64)
    xb = np.asarray(b, dtype=np.float64)
    if xa.size < 2 or xb.size < 2:
        raise ValueError("welch_t_test requires at least 2 values per sample")
    na, nb = xa.size, xb.size
    va = float(xa.var(ddof=1))
    vb = float(xb.var(ddof=1))
    se2 = va / na + vb / nb
    if se2 == 0.0:
        raise ValueError("welch_t_test: both samples have zero variance")
    t = float((xa.mean() - xb.mean()) / math.sqrt(se2))
    df = se2 * se2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    return t, float(df), student_t_two_sided_p(t, df)


# ---------------------------------------------------------------------------
# histograms
# ---------------------------------------------------------------------------

@dataclass
class Histogram:
    """Equal-width bin counts with out-of-range overflow tallies."""

    counts: np.ndarray
    edges: np.ndarray
    below: int
    above: int


def score_histogram(scores, bins, lo, hi):
    """Bin counts over [lo, hi]: right-open bins, last bin right-closed."""
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    if not lo < hi:
        raise ValueError(f"range must satisfy lo < hi, got [{lo}, {hi}]")
    arr = np.asarray(scores, dtype=np.float64)
    below = int(np.count_nonzero(arr < lo))
    above = int(np.count_nonzero(arr > hi))
    in_range = arr[(arr >= lo) & (arr <= hi)]
    counts, edges = np.histogram(in_range, bins=bins, range=(lo, hi))
    return Histogram(counts=counts.astype(np.int64), edges=edges, below=below, above=above)


# ---------------------------------------------------------------------------
# toy embedder
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmbedderConfig:
    """Architecture of the small softmax-trained classifier."""

    embed_dim: int
    num_classes: int
    base_channels: int = 16
    image_channels: int = 3
    image_size: int = 32

    def __post_init__(self):
        if self.embed_dim < 1 or self.num_classes < 2:
            raise ValueError("embed_dim must be >= 1 and num_classes >= 2")
        if self.base_channels < 1 or self.image_size < 8:
            raise ValueError("base_channels must be >= 1 and image_size >= 8")
        if self.image_channels not in (1, 3):
            raise ValueError(f"image_channels must be 1 or 3, got {self.image_channels}")


@dataclass(frozen=True)
class EmbedderTrainConfig:
    """Optimization knobs for :func:`train_embedder`."""

    embed_dim: int = 32
    epochs: int = 20
    lr: float = 1e-3
    batch_size: int = 16
    base_channels: int = 16
    seed: int = 0


_EMBEDDER_BLOCKS = 3


@dataclass
class EmbedderModel:
    config: EmbedderConfig
    params: tg.ParamSet
    stats: list[tg.RunningStats]
    class_labels: list[str]
    step: int = 0


def _embedder_layout(cfg):
    layout = []
    c_in = cfg.image_channels
    for i in range(_EMBEDDER_BLOCKS):
        layout += [
            (f"emb.block{i}.conv.weight", (cfg.base_channels, c_in, 3, 3)),
            (f"emb.block{i}.conv.bias", (cfg.base_channels,)),
            (f"emb.block{i}.bn.gamma", (cfg.base_channels,)),
            (f"emb.block{i}.bn.beta", (cfg.base_channels,)),
        ]
        c_in = cfg.base_channels
    layout += [
        ("emb.fc_embed.weight", (cfg.embed_dim, cfg.base_channels)),
        ("emb.fc_embed.bias", (cfg.embed_dim,)),
        ("emb.fc_class.weight", (cfg.num_classes, cfg.embed_dim)),
        ("emb.fc_class.bias", (cfg.num_classes,)),
    ]
    return layout


def _build_embedder(cfg, class_labels, seed=None):
    params = tg.ParamSet()
    rng = np.random.default_rng(seed if seed is not None else 0)
    for name, shape in _embedder_layout(cfg):
        if seed is None:
            params.add(name, np.zeros(shape))
            continue
        if name.endswith("conv.weight"):
            fan_in = int(np.prod(shape[1:]))
            params.add(name, rng.standard_normal(shape) * np.sqrt(2.0 / fan_in))
        elif name.endswith(".weight"):
            params.add(name, rng.standard_normal(shape) * np.sqrt(2.0 / shape[1]))
        elif name.endswith(".gamma"):
            params.add(name, np.ones(shape))
        else:
            params.add(name, np.zeros(shape))
    stats = [tg.RunningStats() for _ in range(_EMBEDDER_BLOCKS)]
    return EmbedderModel(cfg, params, stats, list(class_labels))


def forward_embedder(model, images, mode="infer"):
    """(N,C,H,W) batch -> (features (N,d) node, class logits (N,K) node)."""
    cfg = model.config
    x = images if isinstance(images, tg.Node) else tg.leaf(np.asarray(images, dtype=np.float64))
    if x.value.shape[1] != cfg.image_channels:
        raise ValueError(f"embedder expects {cfg.image_channels}-channel images, got {x.value.shape[1]}")
    out = x
    for i in range(_EMBEDDER_BLOCKS):
        h = tg.conv2d(out, model.params[f"emb.block{i}.conv.weight"], model.params[f"emb.block{i}.conv.bias"], pad=1)
        h = tg.batchnorm2d(
            h,
            model.params[f"emb.block{i}.bn.gamma"],
            model.params[f"emb.block{i}.bn.beta"],
            mode=mode,
            running=model.stats[i],
        )
        out = tg.relu(h)
    pooled = tg.global_avg_pool(out)
    features = tg.affine(pooled, model.params["emb.fc_embed.weight"], model.params["emb.fc_embed.bias"])
    logits = tg.affine(features, model.params["emb.fc_class.weight"], model.params["emb.fc_class.bias"])
    return features, logits


def train_embedder(images, identities, config=EmbedderTrainConfig()):
    """Train the small conv classifier with softmax cross-entropy.

    ``images`` is (M, C, H, W); ``identities`` the per-image labels. The
    returned model embeds through the penultimate affine layer. Also
    returns the per-epoch mean training loss history.
    """
    data = np.asarray(images, dtype=np.float64)
    if data.ndim != 4 or data.shape[0] == 0:
        raise ValueError(f"images must be a non-empty (M,C,H,W) array, got shape {data.shape}")
    labels = [str(v) for v in identities]
    if len(labels) != data.shape[0]:
        raise ValueError(f"{data.shape[0]} images but {len(labels)} identity labels")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ValueError(f"training requires at least 2 identities, got {len(classes)}")
    counts = {c: labels.count(c) for c in classes}
    thin = [c for c, n in counts.items() if n < 2]
    if thin:
        raise ValueError(f"every identity needs >= 2 images; too few for: {', '.join(thin)}")

    index = {c: k for k, c in enumerate(classes)}
    y = np.array([index[v] for v in labels], dtype=np.int64)
    cfg = EmbedderConfig(
        embed_dim=config.embed_dim,
        num_classes=len(classes),
        base_channels=config.base_channels,
        image_channels=data.shape[1],
        image_size=data.shape[2],
    )
    model = _build_embedder(cfg, classes, seed=config.seed)
    rng = np.random.default_rng(config.seed)
    m = data.shape[0]
    history = []
    for _ in range(config.epochs):
        order = rng.permutation(m)
        losses = []
        for start in range(0, m, config.batch_size):
            idx = order[start : start + config.batch_size]
            if idx.size < 2:
                continue  # batch statistics need more than one sample
            _, logits = forward_embedder(model, data[idx], mode="train")
            loss = tg.softmax_cross_entropy(logits, y[idx])
            tg.backward(loss)
            tg.adam_step(model.params, lr=config.lr)
            model.step += 1
            losses.append(float(loss.value))
        history.append(float(np.mean(losses)) if losses else float("nan"))
    return model, history


def embed_images(model, images, identities, source="original"):
    """Embeddings for a batch of images, tagging identity and source.

    Images whose spatial size differs from the embedder's configured input
    are bilinearly resized first. Embeddings come from initialization when
    the model is untrained, deterministically per seed.
    """
    data = np.asarray(images, dtype=np.float64)
    if data.ndim != 4:
        raise ValueError(f"images must be (M,C,H,W), got shape {data.shape}")
    labels = [str(v) for v in identities]
    if len(labels) != data.shape[0]:
        raise ValueError(f"{data.shape[0]} images but {len(labels)} identity labels")
    if any(not v for v in labels):
        raise ValueError("every image needs a non-empty identity label")
    size = model.config.image_size
    if data.shape[2] != size or data.shape[3] != size:
        data = tg.bilinear_resize(data, size, size)
    if all(s.populated for s in model.stats):
        features, _ = forward_embedder(model, data, mode="infer")
        vectors = features.value.astype(np.float32)
    else:
        # Untrained embedder: normalize each image by its own statistics
        # (stat-free, one image per pass) so embeddings do not depend on
        # how the batch was composed.
        shadow = EmbedderModel(model.config, model.params, [None] * _EMBEDDER_BLOCKS, model.class_labels)
        rows = [forward_embedder(shadow, data[i : i + 1], mode="train")[0].value[0] for i in range(data.shape[0])]
        vectors = np.stack(rows).astype(np.float32)
    return [Embedding(vector=vectors[i], identity=labels[i], source=source) for i in range(len(labels))]


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_embeddings(embeddings, path):
    """One record per line: ``identity,source,v1 v2 ... vd`` (9 significant digits)."""
    with open(path, "w", encoding="utf-8") as fh:
        for emb in embeddings:
            if "," in emb.identity or "," in emb.source:
                raise ValueError(f"identity/source must not contain commas: {emb.identity!r}/{emb.source!r}")
            values = " ".join(f"{float(v):.9g}" for v in emb.vector)
            fh.write(f"{emb.identity},{emb.source},{values}\n")


def load_embeddings(path):
    """Inverse of :func:`save_embeddings`."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"{path}:{ln}: expected 'identity,source,values', got {line!r}")
            identity, source, values = parts
            vector = np.array([float(v) for v in values.split()], dtype=np.float32)
            out.append(Embedding(vector=vector, identity=identity, source=source))
    if not out:
        raise ValueError(f"{path}: no embedding records found")
    dims = {e.vector.shape[0] for e in out}
    if len(dims) != 1:
        raise ValueError(f"{path}: inconsistent embedding dimensions {sorted(dims)}")
    return out


def save_embedder(model, path):
    """Persist the embedder in the EMB1 container."""
    config = asdict(model.config)
    config["class_labels"] = model.class_labels
    tensors = [(name, node.value) for name, node in model.params.items()]
    for i, stats in enumerate(model.stats):
        if stats.populated:
            tensors.append((f"emb.block{i}.bn.running_mean", stats.mean))
            tensors.append((f"emb.block{i}.bn.running_var", stats.var))
    write_container(path, EMBEDDER_MAGIC, config, model.step, tensors)


def load_embedder(path):
    """Inverse of :func:`save_embedder`."""
    config_dict, step, tensors = read_container(path, EMBEDDER_MAGIC)
    labels = config_dict.pop("class_labels", [])
    try:
        cfg = EmbedderConfig(**config_dict)
    except TypeError as exc:
        raise ValueError(f"{path}: bad config block: {exc}") from exc
    model = _build_embedder(cfg, labels, seed=None)
    model.step = step
    expected = dict(_embedder_layout(cfg))
    for name, shape in expected.items():
        if name not in tensors:
            raise ValueError(f"{path}: missing tensor {name!r}")
        if tensors[name].shape != shape:
            raise ValueError(f"{path}: tensor {name!r} has shape {tensors[name].shape}, expected {shape}")
    for name, arr in tensors.items():
        if name in expected:
            model.params[name].value[...] = arr
            continue
        base, _, kind = name.rpartition(".bn.")
        if not base.startswith("emb.block") or kind not in ("running_mean", "running_var"):
            raise ValueError(f"{path}: unexpected tensor {name!r}")
        i = int(base.removeprefix("emb.block"))
        if arr.shape != (cfg.base_channels,):
            raise ValueError(f"{path}: tensor {name!r} has wrong shape {arr.shape}")
        if kind == "running_mean":
            model.stats[i].mean = arr
        else:
            model.stats[i].var = arr
    for i, stats in enumerate(model.stats):
        if (stats.mean is None) != (stats.var is None):
            raise ValueError(f"{path}: running statistics for block {i} are incomplete")
    return model
