"""Model assembly, the training loop, evaluation, and the ablation runner.

One model instance = a flat name -> Tensor parameter dict whose name set is
a pure function of the configuration. A batch of samples runs as a single
recorded graph: all candidate images of all samples are encoded as one
stacked tensor, fused against the tiled context embedding, mixed by the
graph convolution over each sample's candidate set, and scored per node.

Everything stochastic (init, shuffling, augmentation) draws from streams
derived from the run seed, so a (seed, config, dataset) triple reproduces
checkpoints and metrics byte for byte.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import blocks
from .autodiff import Tape, Tensor, backward
from .augment import (
    AugmentConfig,
    SynsetTable,
    augment_image,
    back_translate,
    derive_stream,
    lexical_substitute,
    random_deletion,
    random_insertion,
)
from .data import DatasetManifest, Sample
from .errors import ConfigError, ContractError, InputError
from .fusion import FusionConfig, fuse_cross_attention, fuse_early, init_fusion_params, project
from .gcn import GcnParams, knn_adjacency, normalized_adjacency, propagate
from .head_metrics import MetricsReport, rank_and_metrics, score_candidates
from .rng import Rng
from .text_encoder import (
    TextEncoderConfig,
    Vocabulary,
    embed_tokens,
    encode_text,
    encode_text_features,
    init_text_params,
    tokenize,
)
from .vision_encoder import (
    VisionEncoderConfig,
    encode_image_tokens,
    encode_image_vit_tokens,
    init_vision_params,
    patch_embed,
)

logger = logging.getLogger(__name__)

AUGMENT_MODES = ("none", "text", "image", "both")


class TrainingError(RuntimeError):
    """Non-finite loss or another unrecoverable failure inside the loop."""


@dataclass
class ModelConfig:
    text: TextEncoderConfig = field(default_factory=TextEncoderConfig)
    vision: VisionEncoderConfig = field(default_factory=VisionEncoderConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    vision_variant: str = "swin"  # swin | vit
    # knn is the default topology: under Kipf normalization the fully connected
    # graph collapses to S = J/n, which maps every candidate to the same vector
    # and makes ranking impossible
    gcn_mode: str = "knn"         # full | knn
    gcn_k: int = 3
    gcn_layers: int = 1
    gcn_bypass: bool = False
    pos_weight: float = 1.0

    def __post_init__(self):
        if self.vision_variant not in ("swin", "vit"):
            raise ConfigError(f"vision_variant must be swin or vit, got {self.vision_variant!r}")
        if self.gcn_mode not in ("full", "knn"):
            raise ConfigError(f"gcn_mode must be full or knn, got {self.gcn_mode!r}")
        if self.gcn_layers < 1:
            raise ConfigError("gcn_layers must be >= 1")

    @property
    def image_feature_dim(self) -> int:
        return self.vision.out_dim if self.vision_variant == "swin" else self.vision.embed_dim

    @property
    def node_dim(self) -> int:
        return self.fusion.fused_dim


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 24
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 42
    augment: str = "both"  # none | text | image | both
    eval_batch_size: int = 64
    model: ModelConfig = field(default_factory=ModelConfig)
    augmentation: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.augment not in AUGMENT_MODES:
            raise ConfigError(f"augment must be one of {AUGMENT_MODES}, got {self.augment!r}")


def _dataclass_from_dict(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        nested = {TextEncoderConfig, VisionEncoderConfig, FusionConfig, ModelConfig,
                  AugmentConfig}
        if f.type in {t.__name__ for t in nested} or f.type in nested:
            target = next(t for t in nested
                          if t is f.type or t.__name__ == f.type)
            kwargs[name] = _dataclass_from_dict(target, value, f"{path}.{name}")
        else:
            if name == "rotations" and isinstance(value, list):
                value = tuple(value)
            kwargs[name] = value
    return cls(**kwargs)


def train_config_from_dict(data: dict, path: str = "config") -> TrainConfig:
    """Strict parse: unknown keys anywhere are rejected."""
    data = dict(data)
    data.pop("pivots", None)  # pivot tables load from the dataset dir, not the config
    return _dataclass_from_dict(TrainConfig, data, path)


def config_hash(config: TrainConfig) -> str:
    payload = asdict(config)
    payload["augmentation"].pop("pivots", None)
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=list)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

def init_model_params(config: ModelConfig, vocab_size: int, seed: int) -> dict[str, Tensor]:
    rng = Rng(seed).child("init")
    params: dict[str, Tensor] = {}
    params.update(init_text_params(config.text, vocab_size, rng.child("text")))
    params.update(init_vision_params(config.vision, rng.child("vision"),
                                     variant=config.vision_variant))
    d_image_in = (config.vision.embed_dim if config.fusion.strategy == "early"
                  else config.image_feature_dim)
    params.update(init_fusion_params(config.fusion, config.text.embed_dim, d_image_in,
                                     rng.child("fusion")))
    d_node = config.node_dim
    params["gcn.w"] = blocks.normal_param(rng.child("gcn", "w"), (d_node, d_node),
                                          1.0 / np.sqrt(d_node))
    params["gcn.b"] = blocks.zeros_param((d_node,))
    params["head.w"] = blocks.normal_param(rng.child("head", "w"), (d_node, 1),
                                           1.0 / np.sqrt(d_node))
    params["head.b"] = blocks.zeros_param((1,))
    return params


def parameter_count(params: dict[str, Tensor]) -> int:
    return sum(p.size for p in params.values())


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

def _tile_over_candidates(t: Tensor, n: int) -> Tensor:
    """(B, ...) -> (B*n, ...) by broadcast against zeros (gradient sums back)."""
    shape = t.shape
    expanded = ad.reshape(t, (shape[0], 1) + shape[1:])
    zeros = ad.constant(np.zeros((shape[0], n) + shape[1:]))
    tiled = ad.add(zeros, expanded)
    return ad.reshape(tiled, (shape[0] * n,) + shape[1:])


def _image_tokens(flat_imgs: np.ndarray, params: dict, config: ModelConfig) -> Tensor:
    if config.vision_variant == "swin":
        return encode_image_tokens(flat_imgs, params, config.vision)
    return encode_image_vit_tokens(flat_imgs, params, config.vision)


def _fused_nodes(ids: np.ndarray, images: np.ndarray, params: dict,
                 config: ModelConfig) -> Tensor:
    """(B, L) ids + (B, n, H, W) images -> fused node features (B, n, node_dim)."""
    B, n, H, W = images.shape
    flat_imgs = images.reshape(B * n, H, W)
    strategy = config.fusion.strategy

    if strategy == "late":
        t_pooled = encode_text(ids, params, config.text)
        i_tokens = _image_tokens(flat_imgs, params, config)
        i_pooled = ad.mean_over_axis(i_tokens, 1)
        t_proj = project(t_pooled, "text", params)
        i_proj = project(i_pooled, "image", params)
        d = config.fusion.proj_dim
        t_tiled = ad.reshape(_tile_over_candidates(t_proj, n), (B, n, d))
        return ad.concat_last([t_tiled, ad.reshape(i_proj, (B, n, d))])

    if strategy == "early":
        raw_tokens, mask = embed_tokens(ids, params, config.text)
        t_seq = project(raw_tokens, "text", params)
        grid = patch_embed(flat_imgs, params, config.vision)
        g = grid.shape[1]
        p_seq = project(ad.reshape(grid, (B * n, g * g, grid.shape[-1])), "image", params)
        t_tiled = _tile_over_candidates(t_seq, n)
        tiled_mask = np.repeat(mask, n, axis=0)
        fused = fuse_early(t_tiled, p_seq, params, config.fusion, text_mask=tiled_mask)
        return ad.reshape(fused, (B, n, config.fusion.proj_dim))

    # cross_attention
    t_feats, mask = encode_text_features(ids, params, config.text)
    t_pooled = blocks.masked_mean(t_feats, mask)
    i_tokens = _image_tokens(flat_imgs, params, config)
    i_pooled = ad.mean_over_axis(i_tokens, 1)
    t_seq = project(t_feats, "text", params)
    i_seq = project(i_tokens, "image", params)
    pt = project(t_pooled, "text", params)
    pi = project(i_pooled, "image", params)
    t_seq_tiled = _tile_over_candidates(t_seq, n)
    pt_tiled = _tile_over_candidates(pt, n)
    tiled_mask = np.repeat(mask, n, axis=0)
    fused = fuse_cross_attention(t_seq_tiled, i_seq, pt_tiled, pi, params,
                                 config.fusion, text_mask=tiled_mask)
    return ad.reshape(fused, (B, n, config.fusion.fused_dim))


def _graph_mix(fused: Tensor, params: dict, config: ModelConfig) -> Tensor:
    if config.gcn_bypass:
        return fused
    B, n, _ = fused.shape
    if config.gcn_mode == "full":
        norm = normalized_adjacency(np.ones((n, n)) - np.eye(n))
    else:
        per_sample = [normalized_adjacency(knn_adjacency(fused.data[b], config.gcn_k))
                      for b in range(B)]
        norm = np.stack(per_sample)
    gcn_params = GcnParams(weight=params["gcn.w"], bias=params["gcn.b"],
                           num_layers=config.gcn_layers)
    return propagate(fused, norm, gcn_params)


def forward_scores(ids: np.ndarray, images: np.ndarray, params: dict,
                   config: ModelConfig) -> Tensor:
    """Batched forward: (B, L) ids + (B, n, H, W) images -> (B, n) probabilities."""
    fused = _fused_nodes(ids, images, params, config)
    mixed = _graph_mix(fused, params, config)
    return score_candidates(mixed, params["head.w"], params["head.b"])


def forward_sample(sample: Sample, params: dict, config: ModelConfig,
                   vocab: Vocabulary) -> np.ndarray:
    """One sample -> its candidate probabilities (n,)."""
    ids, _ = tokenize(sample.tokens, vocab, config.text.max_len)
    probs = forward_scores(ids[None, :], sample.images01()[None], params, config)
    return probs.data[0]


def batch_loss(probs: Tensor, golds: np.ndarray, pos_weight: float = 1.0) -> Tensor:
    """Mean over samples of the per-sample mean candidate BCE."""
    B, n = probs.shape
    targets = np.zeros((B, n))
    targets[np.arange(B), golds] = 1.0
    per = ad.binary_cross_entropy(probs, ad.constant(targets))
    if pos_weight != 1.0:
        weights = np.ones((B, n))
        weights[np.arange(B), golds] = pos_weight
        per = ad.mul(per, ad.constant(weights))
    return ad.mean_over_axis(ad.mean_over_axis(per, 1), 0)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros(p.shape) for name, p in params.items()}
        self.v = {name: np.zeros(p.shape) for name, p in params.items()}

    def step(self, grads: dict[int, Tensor]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = grads.get(p.node_id)
            if g is None:
                continue  # parameter not touched by this graph (e.g. bypassed gcn)
            gd = g.data
            self.m[name] = b1 * self.m[name] + (1 - b1) * gd
            self.v[name] = b2 * self.v[name] + (1 - b2) * gd * gd
            m_hat = self.m[name] / bias1
            v_hat = self.v[name] / bias2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# augmentation wiring
# ---------------------------------------------------------------------------

def augment_tokens(sample: Sample, synsets: SynsetTable, aug: AugmentConfig,
                   epoch: int, max_len: int) -> list[str]:
    """Substitute -> insert -> delete -> back-translate, each on its own stream."""
    tokens = list(sample.tokens)
    target = tokens[sample.target_index]
    seed = aug.master_seed
    sid = sample.sample_id

    sub = derive_stream(seed, sid, "substitute", epoch)
    if target in synsets and sub.uniform() < aug.p_substitute:
        tokens = lexical_substitute(tokens, tokens.index(target), synsets, sub,
                                    sense_id=sample.sense_id)
        target = tokens[sample.target_index]
    if aug.n_insert > 0:
        ins = derive_stream(seed, sid, "insert", epoch)
        tokens = random_insertion(tokens, aug.n_insert, synsets, ins,
                                  target_index=tokens.index(target), max_len=max_len)
    if aug.p_delete > 0:
        dele = derive_stream(seed, sid, "delete", epoch)
        tokens = random_deletion(tokens, aug.p_delete, tokens.index(target), dele)
    if aug.pivots:
        bt = derive_stream(seed, sid, "backtranslate", epoch)
        if bt.uniform() < aug.p_back_translate:
            pivot = sorted(aug.pivots)[bt.randint(len(aug.pivots))]
            tokens = back_translate(tokens, pivot, aug)
    return tokens


def augment_images(sample: Sample, aug: AugmentConfig, epoch: int) -> np.ndarray:
    imgs = sample.images01()
    out = np.empty_like(imgs)
    stream = derive_stream(aug.master_seed, sample.sample_id, "image", epoch)
    for k in range(imgs.shape[0]):
        out[k] = augment_image(imgs[k], aug, stream)
    return out


def _build_batch(samples: list[Sample], vocab: Vocabulary, config: TrainConfig,
                 synsets: SynsetTable | None, epoch: int, augment_mode: str):
    max_len = config.model.text.max_len
    ids = np.zeros((len(samples), max_len), dtype=np.int64)
    golds = np.zeros(len(samples), dtype=np.int64)
    images = np.zeros((len(samples), len(samples[0].image_refs),
                       config.model.vision.image_size, config.model.vision.image_size))
    for i, sample in enumerate(samples):
        tokens = sample.tokens
        if augment_mode in ("text", "both") and synsets is not None:
            tokens = augment_tokens(sample, synsets, config.augmentation, epoch, max_len)
        ids[i], _ = tokenize(tokens, vocab, max_len)
        if augment_mode in ("image", "both"):
            images[i] = augment_images(sample, config.augmentation, epoch)
        else:
            images[i] = sample.images01()
        golds[i] = sample.gold
    return ids, images, golds


# ---------------------------------------------------------------------------
# training and evaluation
# ---------------------------------------------------------------------------

@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    test_metrics: MetricsReport
    wall_seconds: float


@dataclass
class RunHistory:
    epochs: list[EpochStats] = field(default_factory=list)

    def final_metrics(self) -> MetricsReport:
        if not self.epochs:
            raise ContractError("empty run history")
        return self.epochs[-1].test_metrics


def evaluate(params: dict, manifest: DatasetManifest, config: TrainConfig,
             vocab: Vocabulary) -> MetricsReport:
    """Forward every sample without augmentation; rank gold candidates."""
    if not manifest.samples:
        raise InputError("evaluate: empty split")
    model = config.model
    score_lists = []
    golds = []
    bs = config.eval_batch_size
    for start in range(0, len(manifest.samples), bs):
        chunk = manifest.samples[start:start + bs]
        ids, images, gold = _build_batch(chunk, vocab, config, None, 0, "none")
        probs = forward_scores(ids, images, params, model)
        score_lists.extend(probs.data)
        golds.extend(gold)
    return rank_and_metrics(score_lists, golds, seed=config.seed,
                            config_hash=config_hash(config))


def train_model(params: dict, train_split: DatasetManifest, test_split: DatasetManifest,
                config: TrainConfig, vocab: Vocabulary,
                synsets: SynsetTable | None = None) -> RunHistory:
    """Adam over shuffled mini-batches; evaluates the test split each epoch."""
    if not train_split.samples:
        raise InputError("train: empty training split")
    config.augmentation.master_seed = config.seed
    optimizer = Adam(params, lr=config.learning_rate, beta1=config.beta1,
                     beta2=config.beta2, eps=config.adam_eps)
    history = RunHistory()
    n = len(train_split.samples)
    for epoch in range(config.epochs):
        started = time.monotonic()
        order = Rng(config.seed).child("shuffle", epoch).permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            chunk = [train_split.samples[i] for i in order[start:start + config.batch_size]]
            ids, images, golds = _build_batch(chunk, vocab, config, synsets, epoch,
                                              config.augment)
            with Tape():
                probs = forward_scores(ids, images, params, config.model)
                loss = batch_loss(probs, golds, config.model.pos_weight)
                grads = backward(loss)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(
                    f"non-finite loss {value} at epoch {epoch}, batch {start // config.batch_size}")
            loss_sum += value * len(chunk)
            optimizer.step(grads)
        test_metrics = evaluate(params, test_split, config, vocab)
        stats = EpochStats(epoch=epoch, train_loss=loss_sum / n,
                           test_metrics=test_metrics,
                           wall_seconds=time.monotonic() - started)
        history.epochs.append(stats)
        logger.info("epoch %d: train_loss=%.4f test_acc=%.4f test_mrr=%.4f (%.1fs)",
                    epoch, stats.train_loss, test_metrics.accuracy, test_metrics.mrr,
                    stats.wall_seconds)
    return history


def history_csv_lines(history: RunHistory) -> list[str]:
    # wall-clock deliberately excluded: history bytes must be reproducible
    lines = ["epoch,train_loss,test_accuracy,test_mrr"]
    for e in history.epochs:
        lines.append(f"{e.epoch},{e.train_loss!r},{e.test_metrics.accuracy!r},"
                     f"{e.test_metrics.mrr!r}")
    return lines


def write_history_csv(history: RunHistory, path) -> None:
    Path(path).write_text("\n".join(history_csv_lines(history)) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"NTC1"


def save_checkpoint(path, params: dict[str, Tensor], cfg_hash: str = "") -> None:
    """Named-tensor container: JSON header then little-endian float64 payload."""
    names = sorted(params)
    header = {"config_hash": cfg_hash,
              "tensors": [{"name": n, "shape": list(params[n].shape)} for n in names]}
    blob = b"".join(np.ascontiguousarray(params[n].data, dtype="<f8").tobytes()
                    for n in names)
    header_bytes = json.dumps(header, separators=(",", ":"), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(len(header_bytes).to_bytes(8, "little"))
        fh.write(header_bytes)
        fh.write(blob)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], str]:
    from .errors import LoadError
    raw = Path(path).read_bytes()
    if raw[:4] != _CKPT_MAGIC:
        raise LoadError(f"{path}: not a checkpoint (bad magic)")
    header_len = int.from_bytes(raw[4:12], "little")
    try:
        header = json.loads(raw[12:12 + header_len])
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path}: corrupt checkpoint header: {exc}") from exc
    offset = 12 + header_len
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(raw):
            raise LoadError(f"{path}: truncated checkpoint payload at {entry['name']}")
        tensors[entry["name"]] = np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape).copy()
        offset = end
    if offset != len(raw):
        raise LoadError(f"{path}: trailing bytes after checkpoint payload")
    return tensors, header.get("config_hash", "")


def restore_params(params: dict[str, Tensor], tensors: dict[str, np.ndarray]) -> None:
    from .errors import LoadError
    if set(params) != set(tensors):
        missing = sorted(set(params) - set(tensors))
        extra = sorted(set(tensors) - set(params))
        raise LoadError(f"checkpoint/model mismatch: missing {missing}, unexpected {extra}")
    for name, p in params.items():
        if tuple(tensors[name].shape) != p.shape:
            raise LoadError(f"checkpoint tensor {name} has shape {tensors[name].shape}, "
                            f"model expects {p.shape}")
        p.data = tensors[name].astype(np.float64)


# ---------------------------------------------------------------------------
# ablation runner
# ---------------------------------------------------------------------------

ARM_KEYS = {
    "lm_capacity": ("small", "large"),
    "vision": ("swin", "vit"),
    "gcn": ("on", "bypass"),
    "augment": AUGMENT_MODES,
    "fusion": ("late", "early", "cross_attention"),
}


def arm_name(arm: dict) -> str:
    return ",".join(f"{k}={arm[k]}" for k in sorted(arm)) or "base"


def apply_arm(base: TrainConfig, arm: dict) -> TrainConfig:
    """Validated config delta for one ablation arm."""
    for key, value in arm.items():
        if key not in ARM_KEYS:
            raise ConfigError(f"unknown ablation arm key {key!r}; known: {sorted(ARM_KEYS)}")
        if value not in ARM_KEYS[key]:
            raise ConfigError(f"arm {key}={value!r} not in {ARM_KEYS[key]}")
    config = copy.deepcopy(base)
    if arm.get("lm_capacity") == "large":
        config.model.text.embed_dim = 2 * base.model.text.embed_dim
        config.model.text.num_layers = 2 * base.model.text.num_layers
    if "vision" in arm:
        config.model.vision_variant = arm["vision"]
    if "gcn" in arm:
        config.model.gcn_bypass = arm["gcn"] == "bypass"
    if "augment" in arm:
        config.augment = arm["augment"]
    if "fusion" in arm:
        config.model.fusion.strategy = arm["fusion"]
    return config


def run_single_arm(base: TrainConfig, arm: dict, seed: int,
                   train_split: DatasetManifest, test_split: DatasetManifest,
                   vocab: Vocabulary, synsets: SynsetTable,
                   eval_split: DatasetManifest | None = None) -> tuple[str, int, float, float]:
    config = apply_arm(base, arm)
    config.seed = seed
    params = init_model_params(config.model, len(vocab), seed)
    history = train_model(params, train_split, test_split, config, vocab, synsets)
    if eval_split is not None:
        report = evaluate(params, eval_split, config, vocab)
    else:
        report = history.final_metrics()
    return arm_name(arm), seed, report.accuracy, report.mrr


def run_ablation(base: TrainConfig, arms: list[dict], seeds: list[int],
                 train_split: DatasetManifest, test_split: DatasetManifest,
                 vocab: Vocabulary, synsets: SynsetTable,
                 eval_split: DatasetManifest | None = None,
                 jobs: int = 1) -> list[tuple[str, int, float, float]]:
    """Train every (arm, seed) pair; rows come back sorted by (arm, seed)."""
    tasks = [(arm, seed) for arm in arms for seed in seeds]
    rows = []
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_single_arm, base, arm, seed, train_split,
                                   test_split, vocab, synsets, eval_split)
                       for arm, seed in tasks]
            rows = [f.result() for f in futures]
    else:
        for arm, seed in tasks:
            rows.append(run_single_arm(base, arm, seed, train_split, test_split,
                                       vocab, synsets, eval_split))
    return sorted(rows, key=lambda r: (r[0], r[1]))


def ablation_csv_lines(rows) -> list[str]:
    lines = ["arm,seed,accuracy,mrr"]
    for arm, seed, acc, mrr in rows:
        lines.append(f"{arm},{seed},{acc!r},{mrr!r}")
    return lines


def ablation_summary_lines(rows) -> list[str]:
    """Per-arm mean and sample standard deviation of both metrics."""
    by_arm: dict[str, list[tuple[float, float]]] = {}
    for arm, _, acc, mrr in rows:
        by_arm.setdefault(arm, []).append((acc, mrr))
    lines = ["arm,n_seeds,accuracy_mean,accuracy_std,mrr_mean,mrr_std"]
    for arm in sorted(by_arm):
        accs = np.array([a for a, _ in by_arm[arm]])
        mrrs = np.array([m for _, m in by_arm[arm]])
        acc_std = accs.std(ddof=1) if len(accs) > 1 else 0.0
        mrr_std = mrrs.std(ddof=1) if len(mrrs) > 1 else 0.0
        lines.append(f"{arm},{len(accs)},{accs.mean()!r},{acc_std!r},"
                     f"{mrrs.mean()!r},{mrr_std!r}")
    return lines
