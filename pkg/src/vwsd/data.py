"""Procedural disambiguation benchmark: sense inventory, images, manifests.

Every ambiguous pseudo-word gets 2-4 senses; each sense owns a visual
prototype (one of four pattern families with its own orientation, scale and
placement) and a pool of context words disjoint from its sibling senses'
pools, so the context identifies the gold sense and the task is solvable.
A sample is a short context phrase plus 10 candidate images: the gold
render, same-word-other-sense confounders, context-matching confounders
from other words, and random distractors.

Datasets live on disk as a directory {train.jsonl, test.jsonl, synsets.tsv,
vocab.txt, pivots/, images/}; images are binary PGM (P5, maxval 255) or
inline 0-255 integer arrays in the manifest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import PivotTable, Sense, SynsetTable
from .errors import ConfigError, GenerationError, InputError, LoadError
from .rng import Rng

SCHEMA_VERSION = 1
PATTERN_FAMILIES = ("stripes", "checkerboard", "gradient", "blob")

_SYLLABLES = ("ba", "cho", "de", "fi", "go", "hu", "ka", "lo", "mi", "na",
              "pe", "ra", "su", "ta", "vu", "ze")


# ---------------------------------------------------------------------------
# sense inventory
# ---------------------------------------------------------------------------

@dataclass
class SenseSpec:
    word: str
    sense_id: str
    pattern: str
    orientation: int
    scale: float
    position: tuple[float, float]
    context_pool: list[str]
    synonyms: list[str]

    def prototype_key(self) -> tuple:
        return (self.pattern, self.orientation, round(self.scale, 6),
                tuple(round(p, 6) for p in self.position))


@dataclass
class Sample:
    sample_id: str
    tokens: list[str]
    target: str
    target_index: int
    image_refs: list
    gold: int
    sense_id: str
    pixels: np.ndarray | None = None  # (n, H, W) uint8, filled by generator/loader

    def images01(self) -> np.ndarray:
        """Candidate images as float64 in [0, 1]."""
        if self.pixels is None:
            raise LoadError(f"sample {self.sample_id}: images not loaded")
        return self.pixels.astype(np.float64) / 255.0


@dataclass
class DatasetManifest:
    split: str
    samples: list[Sample]
    image_mode: str = "pgm"  # pgm | inline
    schema_version: int = SCHEMA_VERSION

    def __len__(self):
        return len(self.samples)


@dataclass
class GenConfig:
    n_words: int = 12
    senses_min: int = 2
    senses_max: int = 3
    synonyms_per_sense: int = 2
    context_vocab: int = 30
    context_pool_size: int = 3
    train_samples: int = 4000
    test_samples: int = 500
    n_candidates: int = 10
    image_size: int = 32
    render_sigma: float = 0.03
    relational_mode: bool = False
    relational_offset: float = 0.3
    min_prototype_separation: float = 0.05

    def __post_init__(self):
        if not 2 <= self.senses_min <= self.senses_max <= 4:
            raise ConfigError("senses per word must satisfy 2 <= min <= max <= 4")
        if self.context_vocab < self.senses_max * self.context_pool_size:
            raise ConfigError("context_vocab too small for disjoint per-sense pools")
        if self.n_candidates < 4:
            raise ConfigError("need at least 4 candidates for the confounder mix")
        if self.train_samples < 1 or self.test_samples < 1:
            raise ConfigError("both splits must be non-empty")


# ---------------------------------------------------------------------------
# pattern rendering
# ---------------------------------------------------------------------------

def _coords(size: int) -> tuple[np.ndarray, np.ndarray]:
    ax = (np.arange(size) + 0.5) / size
    return np.meshgrid(ax, ax, indexing="ij")  # (y, x)


def _pattern(spec: SenseSpec, size: int) -> np.ndarray:
    y, x = _coords(size)
    theta = np.deg2rad(spec.orientation)
    proj = np.cos(theta) * y + np.sin(theta) * x
    px, py = spec.position
    if spec.pattern == "stripes":
        return 0.5 + 0.35 * np.sin(2 * np.pi * (spec.scale * proj + px))
    if spec.pattern == "checkerboard":
        cell = max(2, int(round(spec.scale)))
        iy = np.floor((np.arange(size) + py * cell))[:, None] // cell
        ix = np.floor((np.arange(size) + px * cell))[None, :] // cell
        return np.where((iy + ix) % 2 == 0, 0.8, 0.2) * np.ones((size, size))
    if spec.pattern == "gradient":
        t = proj - proj.min()
        t = t / t.max()
        lo = 0.15 + 0.2 * px
        return lo + (0.85 - lo) * t ** spec.scale
    if spec.pattern == "blob":
        d2 = (y - py) ** 2 + (x - px) ** 2
        return 0.2 + 0.65 * np.exp(-d2 / (2 * spec.scale ** 2))
    raise ConfigError(f"unknown pattern family {spec.pattern!r}")


def render_sense_image(spec: SenseSpec, rng: Rng, noise_sigma: float,
                       brightness_offset: float = 0.0, size: int = 32) -> np.ndarray:
    """Deterministic prototype + optional Gaussian noise + offset, clamped to [0, 1]."""
    img = _pattern(spec, size)
    if noise_sigma > 0:
        img = img + noise_sigma * rng.normals(size * size).reshape(size, size)
    if brightness_offset:
        img = img + brightness_offset
    return np.clip(img, 0.0, 1.0)


def quantize(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)


def _sample_prototype(rng: Rng, pattern: str) -> tuple[int, float, tuple[float, float]]:
    if pattern == "stripes":
        orientation = rng.choice([0, 45, 90, 135])
        scale = float(rng.choice([2, 3, 4, 5]))
        position = (rng.uniform(), 0.0)
    elif pattern == "checkerboard":
        orientation = 0
        scale = float(rng.choice([4, 6, 8]))
        position = (float(rng.randint(int(scale))) / scale,
                    float(rng.randint(int(scale))) / scale)
    elif pattern == "gradient":
        orientation = rng.choice([0, 45, 90, 135, 180, 225, 270, 315])
        scale = 0.6 + 1.2 * rng.uniform()
        position = (rng.uniform(), 0.0)
    else:  # blob
        orientation = 0
        scale = 0.1 + 0.15 * rng.uniform()
        position = (0.25 + 0.5 * rng.uniform(), 0.25 + 0.5 * rng.uniform())
    return orientation, scale, position


def _make_word(rng: Rng, taken: set, n_syllables: int = 2) -> str:
    for _ in range(1000):
        word = "".join(rng.choice(_SYLLABLES) for _ in range(n_syllables))
        if word not in taken:
            taken.add(word)
            return word
    raise GenerationError("pseudo-word space exhausted; lower the vocabulary sizes")


def build_sense_inventory(config: GenConfig, rng: Rng) -> tuple[list[SenseSpec], list[str]]:
    """Sense specs with separated prototypes + the shared context vocabulary."""
    taken: set[str] = set()
    words = [_make_word(rng.child("words"), taken) for _ in range(config.n_words)]
    context_vocab = [_make_word(rng.child("context"), taken, 3)
                     for _ in range(config.context_vocab)]

    specs: list[SenseSpec] = []
    wrng = rng.child("senses")
    for word in words:
        n_senses = config.senses_min + wrng.randint(config.senses_max - config.senses_min + 1)
        pool_words = list(context_vocab)
        wrng.shuffle(pool_words)  # disjoint pools: consecutive slices of one shuffle
        for s in range(n_senses):
            pool = pool_words[s * config.context_pool_size:(s + 1) * config.context_pool_size]
            synonyms = [word] + [_make_word(wrng, taken)
                                 for _ in range(config.synonyms_per_sense - 1)]
            pattern = PATTERN_FAMILIES[wrng.randint(len(PATTERN_FAMILIES))]
            orientation, scale, position = _sample_prototype(wrng, pattern)
            specs.append(SenseSpec(word=word, sense_id=f"{word}.{s}", pattern=pattern,
                                   orientation=orientation, scale=scale, position=position,
                                   context_pool=pool, synonyms=synonyms))

    _separate_prototypes(specs, config, rng.child("separate"))
    return specs, context_vocab


def _dihedral_orbit(img: np.ndarray) -> list[np.ndarray]:
    orbit = []
    for k in range(4):
        rot = np.rot90(img, k)
        orbit.append(rot)
        orbit.append(rot[:, ::-1])
    return orbit


def _orbit_distance(a: np.ndarray, b_orbit: list[np.ndarray]) -> float:
    return min(float(np.abs(a - b).mean()) for b in b_orbit)


def _separate_prototypes(specs: list[SenseSpec], config: GenConfig, rng: Rng) -> None:
    """Resample colliding prototypes until all pairs differ by > the threshold.

    Distance is the minimum mean-abs difference over the dihedral orbit
    (rotations and flips) of one side, so the rotation/flip augmentations
    can never turn one sense's image into another sense's prototype.
    """
    size = config.image_size
    renders = {s.sense_id: _pattern(s, size) for s in specs}
    orbits = {sid: _dihedral_orbit(img) for sid, img in renders.items()}
    for attempt in range(500):
        collision = None
        for i, a in enumerate(specs):
            for b in specs[i + 1:]:
                if _orbit_distance(renders[a.sense_id], orbits[b.sense_id]) \
                        <= config.min_prototype_separation:
                    collision = b
                    break
            if collision:
                break
        if collision is None:
            return
        pattern = PATTERN_FAMILIES[rng.randint(len(PATTERN_FAMILIES))]
        collision.pattern = pattern
        collision.orientation, collision.scale, collision.position = \
            _sample_prototype(rng, pattern)
        renders[collision.sense_id] = _pattern(collision, size)
        orbits[collision.sense_id] = _dihedral_orbit(renders[collision.sense_id])
    raise GenerationError(
        f"could not separate prototypes beyond {config.min_prototype_separation} "
        f"orbit mean abs difference after 500 attempts")


def build_synset_table(specs: list[SenseSpec], context_vocab: list[str],
                       rng: Rng) -> SynsetTable:
    """Target senses plus single-sense entries (with one alias) per context word."""
    taken = {syn for s in specs for syn in s.synonyms} | set(context_vocab)
    senses = [Sense(word=s.word, sense_id=s.sense_id, synonyms=list(s.synonyms),
                    gloss=list(s.context_pool)) for s in specs]
    for word in context_vocab:
        alias = _make_word(rng, taken, 3)
        senses.append(Sense(word=word, sense_id=f"{word}.0", synonyms=[word, alias]))
    return SynsetTable(senses)


def build_pivot_tables(table: SynsetTable, pivot_ids: tuple[str, ...] = ("p1", "p2"),
                       ) -> dict[str, PivotTable]:
    """Round-trip tables whose reverse side collapses each synonym group to one form."""
    groups = [sense.synonyms for sense in table.all_senses()]
    pivots = {}
    for pid in pivot_ids:
        forward, reverse = {}, {}
        for group in groups:
            rep = min(group)
            for word in group:
                pivot_form = f"{pid}:{word}"
                forward[word] = pivot_form
                reverse[pivot_form] = rep
        pivots[pid] = PivotTable(pivot_id=pid, forward=forward, reverse=reverse)
    return pivots


# ---------------------------------------------------------------------------
# sample generation
# ---------------------------------------------------------------------------

def _render_candidate(spec: SenseSpec, config: GenConfig, stream: Rng,
                      offset: float) -> np.ndarray:
    img = render_sense_image(spec, stream, config.render_sigma, offset,
                             config.image_size)
    return quantize(img)


def _generate_split(split: str, n_samples: int, specs: list[SenseSpec],
                    config: GenConfig, rng: Rng) -> DatasetManifest:
    by_word: dict[str, list[SenseSpec]] = {}
    for s in specs:
        by_word.setdefault(s.word, []).append(s)
    by_context: dict[str, list[SenseSpec]] = {}
    for s in specs:
        for c in s.context_pool:
            by_context.setdefault(c, []).append(s)
    words = sorted(by_word)

    samples = []
    for i in range(n_samples):
        sid = f"{split}-{i:05d}"
        srng = rng.child(split, i)
        word = srng.choice(words)
        gold_spec = srng.choice(by_word[word])

        n_context_words = 1 + (srng.uniform() < 0.5)
        pool = list(gold_spec.context_pool)
        srng.shuffle(pool)
        context_words = pool[:n_context_words]
        tokens = [word] + context_words
        srng.shuffle(tokens)
        target_index = tokens.index(word)

        # confounders: same word, other senses (rendered fresh per slot)
        other_senses = [s for s in by_word[word] if s.sense_id != gold_spec.sense_id]
        n_same = 2 + (srng.uniform() < 0.5)
        same_word = [srng.choice(other_senses) for _ in range(n_same)]

        # context matchers from other words
        ctx_specs = [s for c in context_words for s in by_context.get(c, [])
                     if s.word != word]
        n_ctx = 2 + (srng.uniform() < 0.5)
        context_conf = [srng.choice(ctx_specs) for _ in range(n_ctx)] if ctx_specs else []

        distract_pool = [s for s in specs if s.sense_id != gold_spec.sense_id]
        n_fill = config.n_candidates - 1 - len(same_word) - len(context_conf)
        distractors = [srng.choice(distract_pool) for _ in range(n_fill)]

        candidate_specs = [gold_spec] + same_word + context_conf + distractors
        order = srng.permutation(config.n_candidates)
        placed: list[SenseSpec | None] = [None] * config.n_candidates
        for slot, spec_idx in zip(order, range(config.n_candidates)):
            placed[slot] = candidate_specs[spec_idx]
        gold = placed.index(gold_spec)

        offset = 0.0
        if config.relational_mode:
            offset = (2.0 * srng.child("offset").uniform() - 1.0) * config.relational_offset
        pixels = np.stack([
            _render_candidate(placed[k], config, srng.child("img", k), offset)
            for k in range(config.n_candidates)])

        refs = [f"images/{sid}_{k:02d}.pgm" for k in range(config.n_candidates)]
        samples.append(Sample(sample_id=sid, tokens=tokens, target=word,
                              target_index=target_index, image_refs=refs, gold=gold,
                              sense_id=gold_spec.sense_id, pixels=pixels))
    return DatasetManifest(split=split, samples=samples, image_mode="pgm")


@dataclass
class GeneratedDataset:
    train: DatasetManifest
    test: DatasetManifest
    synsets: SynsetTable
    pivots: dict[str, PivotTable]
    senses: list[SenseSpec] = field(repr=False, default_factory=list)
    config: GenConfig = field(default_factory=GenConfig)
    seed: int = 0

    def vocab_tokens(self) -> list[str]:
        tokens = set()
        for sense in self.synsets.all_senses():
            tokens.add(sense.word)
            tokens.update(sense.synonyms)
        return sorted(tokens)


def generate_dataset(config: GenConfig, seed: int) -> GeneratedDataset:
    """Pure function of (config, seed): inventory, synsets, pivots, both splits."""
    rng = Rng(seed).child("dataset")
    specs, context_vocab = build_sense_inventory(config, rng)
    synsets = build_synset_table(specs, context_vocab, rng.child("aliases"))
    pivots = build_pivot_tables(synsets)
    train = _generate_split("train", config.train_samples, specs, config, rng)
    test = _generate_split("test", config.test_samples, specs, config, rng)
    return GeneratedDataset(train=train, test=test, synsets=synsets, pivots=pivots,
                            senses=specs, config=config, seed=seed)


def noise_perturbed_variant(manifest: DatasetManifest, sigma: float,
                            seed: int) -> DatasetManifest:
    """Held-out stress variant: extra Gaussian pixel noise on every candidate."""
    rng = Rng(seed)
    out = []
    for sample in manifest.samples:
        stream = rng.child("perturb", sample.sample_id)
        imgs = sample.images01()
        noisy = np.clip(imgs + sigma * stream.normals(imgs.size).reshape(imgs.shape),
                        0.0, 1.0)
        out.append(Sample(sample_id=sample.sample_id, tokens=list(sample.tokens),
                          target=sample.target, target_index=sample.target_index,
                          image_refs=list(sample.image_refs), gold=sample.gold,
                          sense_id=sample.sense_id, pixels=quantize(noisy)))
    return DatasetManifest(split=f"{manifest.split}-noisy", samples=out,
                           image_mode=manifest.image_mode)


# ---------------------------------------------------------------------------
# PGM I/O
# ---------------------------------------------------------------------------

def write_pgm(path, pixels: np.ndarray) -> None:
    if pixels.dtype != np.uint8 or pixels.ndim != 2:
        raise InputError("write_pgm expects a 2-d uint8 array")
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise LoadError(f"{path}: not a binary PGM (missing P5 magic)")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":  # comment line
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise LoadError(f"{path}: only maxval 255 is supported, got {maxval}")
    data = raw[pos:pos + w * h]
    if len(data) != w * h:
        raise LoadError(f"{path}: truncated pixel data")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w)


# ---------------------------------------------------------------------------
# manifest serialization
# ---------------------------------------------------------------------------

_SAMPLE_FIELDS = ("id", "tokens", "target", "target_index", "images", "gold", "sense_id")


def _sample_to_json(sample: Sample, image_mode: str) -> str:
    images = (sample.image_refs if image_mode == "pgm"
              else [img.tolist() for img in sample.pixels])
    record = {"id": sample.sample_id, "tokens": sample.tokens, "target": sample.target,
              "target_index": sample.target_index, "images": images,
              "gold": sample.gold, "sense_id": sample.sense_id}
    return json.dumps(record, separators=(",", ":"))


def write_manifest(manifest: DatasetManifest, path) -> None:
    header = json.dumps({"schema_version": manifest.schema_version,
                         "split": manifest.split,
                         "image_mode": manifest.image_mode},
                        separators=(",", ":"))
    lines = [header] + [_sample_to_json(s, manifest.image_mode) for s in manifest.samples]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path, load_images: bool = True) -> DatasetManifest:
    """Parse, validate, and (optionally) resolve every image of a manifest."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise LoadError(f"{path}: empty manifest")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path}: bad header line: {exc}") from exc
    version = header.get("schema_version")
    if version != SCHEMA_VERSION:
        raise LoadError(f"{path}: unsupported schema version {version!r}")
    image_mode = header.get("image_mode", "pgm")
    if image_mode not in ("pgm", "inline"):
        raise LoadError(f"{path}: unknown image mode {image_mode!r}")

    samples = []
    seen_ids = set()
    n_candidates = None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LoadError(f"{path}:{lineno}: bad json: {exc}") from exc
        extra = set(rec) - set(_SAMPLE_FIELDS)
        missing = set(_SAMPLE_FIELDS) - set(rec)
        if extra or missing:
            raise LoadError(f"{path}:{lineno}: sample fields mismatch "
                            f"(missing {sorted(missing)}, unknown {sorted(extra)})")
        sid = rec["id"]
        if sid in seen_ids:
            raise LoadError(f"{path}:{lineno}: duplicate sample id {sid!r}")
        seen_ids.add(sid)
        images = rec["images"]
        if n_candidates is None:
            n_candidates = len(images)
        if len(images) != n_candidates:
            raise LoadError(f"{path}:{lineno}: sample {sid} has {len(images)} images, "
                            f"expected {n_candidates}")
        if not 0 <= rec["gold"] < n_candidates:
            raise LoadError(f"{path}:{lineno}: sample {sid} gold index {rec['gold']} "
                            f"out of range [0, {n_candidates})")
        tokens = rec["tokens"]
        tix = rec["target_index"]
        if not 0 <= tix < len(tokens) or tokens[tix] != rec["target"]:
            raise LoadError(f"{path}:{lineno}: sample {sid} target/index mismatch")

        pixels = None
        if image_mode == "inline":
            try:
                pixels = np.array(images, dtype=np.uint8)
            except (ValueError, OverflowError) as exc:
                raise LoadError(f"{path}:{lineno}: sample {sid} bad inline pixels: "
                                f"{exc}") from exc
            refs = [f"inline:{k}" for k in range(n_candidates)]
        else:
            refs = list(images)
            if load_images:
                imgs = []
                for ref in refs:
                    img_path = path.parent / ref
                    if not img_path.exists():
                        raise LoadError(f"{path}:{lineno}: sample {sid} references "
                                        f"missing image {ref}")
                    imgs.append(read_pgm(img_path))
                pixels = np.stack(imgs)
        samples.append(Sample(sample_id=sid, tokens=tokens, target=rec["target"],
                              target_index=tix, image_refs=refs, gold=rec["gold"],
                              sense_id=rec["sense_id"], pixels=pixels))
    if not samples:
        raise LoadError(f"{path}: manifest has no samples")
    return DatasetManifest(split=header.get("split", "unknown"), samples=samples,
                           image_mode=image_mode, schema_version=version)


# ---------------------------------------------------------------------------
# dataset directory
# ---------------------------------------------------------------------------

def save_dataset(bundle: GeneratedDataset, out_dir) -> None:
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "pivots").mkdir(exist_ok=True)
    for manifest, name in ((bundle.train, "train.jsonl"), (bundle.test, "test.jsonl")):
        for sample in manifest.samples:
            for k, ref in enumerate(sample.image_refs):
                write_pgm(out / ref, sample.pixels[k])
        write_manifest(manifest, out / name)
    bundle.synsets.save(out / "synsets.tsv")
    for pid, table in bundle.pivots.items():
        table.save(out / "pivots" / f"{pid}.fwd.tsv", out / "pivots" / f"{pid}.rev.tsv")
    from .text_encoder import Vocabulary
    Vocabulary.from_tokens(bundle.vocab_tokens()).save(out / "vocab.txt")


def load_pivots(dataset_dir) -> dict[str, PivotTable]:
    pivots = {}
    pivot_dir = Path(dataset_dir) / "pivots"
    if pivot_dir.is_dir():
        for fwd in sorted(pivot_dir.glob("*.fwd.tsv")):
            pid = fwd.name[:-len(".fwd.tsv")]
            rev = pivot_dir / f"{pid}.rev.tsv"
            if not rev.exists():
                raise LoadError(f"pivot {pid}: missing reverse table {rev}")
            pivots[pid] = PivotTable.load(pid, fwd, rev)
    return pivots


def load_dataset(dataset_dir):
    """Dataset directory -> (train manifest, test manifest, synsets, pivots)."""
    base = Path(dataset_dir)
    for required in ("train.jsonl", "test.jsonl", "synsets.tsv"):
        if not (base / required).exists():
            raise LoadError(f"dataset directory {base} is missing {required}")
    train = load_manifest(base / "train.jsonl")
    test = load_manifest(base / "test.jsonl")
    synsets = SynsetTable.load(base / "synsets.tsv")
    return train, test, synsets, load_pivots(base)


# ---------------------------------------------------------------------------
# SemEval-layout loader
# ---------------------------------------------------------------------------

def _resize_nearest(img: np.ndarray, side: int) -> np.ndarray:
    h, w = img.shape
    iy = np.floor(np.arange(side) * h / side).astype(int)
    ix = np.floor(np.arange(side) * w / side).astype(int)
    return img[np.ix_(iy, ix)]


def load_semeval_layout(directory, image_size: int = 32) -> DatasetManifest:
    """Pinned layout: data.tsv (word, phrase, 10 image names), gold.tsv, images/.

    Rows with any other arity, golds outside the row's candidates, phrases
    not containing the target word, or unreadable images are rejected with
    the offending line number.
    """
    base = Path(directory)
    data_path = base / "data.tsv"
    gold_path = base / "gold.tsv"
    image_dir = base / "images"
    for p in (data_path, gold_path):
        if not p.exists():
            raise LoadError(f"semeval layout: missing {p}")
    if not image_dir.is_dir():
        raise LoadError(f"semeval layout: missing image folder {image_dir}")

    rows = data_path.read_text(encoding="utf-8").splitlines()
    golds = gold_path.read_text(encoding="utf-8").splitlines()
    rows = [r for r in rows if r.strip()]
    golds = [g.strip() for g in golds if g.strip()]
    if len(rows) != len(golds):
        raise LoadError(f"semeval layout: {len(rows)} data rows but {len(golds)} gold lines")

    samples = []
    for lineno, (row, gold_name) in enumerate(zip(rows, golds), start=1):
        parts = row.split("\t")
        if len(parts) != 12:
            raise LoadError(f"data.tsv:{lineno}: expected 12 tab-separated columns "
                            f"(word, phrase, 10 images), got {len(parts)}")
        word, phrase = parts[0], parts[1]
        image_names = parts[2:]
        tokens = phrase.split()
        if word not in tokens:
            raise LoadError(f"data.tsv:{lineno}: target word {word!r} absent from phrase")
        if gold_name not in image_names:
            raise LoadError(f"data.tsv:{lineno}: gold image {gold_name!r} not among "
                            f"the row's 10 candidates")
        pixels = []
        for name in image_names:
            img_path = image_dir / name
            if not img_path.exists():
                raise LoadError(f"data.tsv:{lineno}: missing image file {name}")
            pixels.append(_resize_nearest(read_pgm(img_path), image_size))
        samples.append(Sample(
            sample_id=f"semeval-{lineno:05d}", tokens=tokens, target=word,
            target_index=tokens.index(word),
            image_refs=[f"inline:{k}" for k in range(len(image_names))],
            gold=image_names.index(gold_name), sense_id="",
            pixels=np.stack(pixels)))
    if not samples:
        raise LoadError("semeval layout: no samples found")
    return DatasetManifest(split="semeval", samples=samples, image_mode="inline")
