"""Text and image augmentation, plus the sense-table plumbing behind them.

Text techniques: synonym insertion at random positions, random deletion
that always protects the ambiguous target word, deterministic pivot-table
back translation (a lossy word-level round trip that paraphrases), and
lexical substitution of the target with a same-sense synonym. Image
techniques: right-angle rotation, horizontal flip, additive Gaussian noise,
clamped back to [0, 1].

Every stochastic draw comes from a stream derived from
(master seed, sample id, technique); epoch-indexed sub-streams keep draws
fresh per epoch while staying independent of batch composition.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, InputError
from .rng import Rng

logger = logging.getLogger(__name__)

ROTATION_SET = (0, 90, 180, 270)


@dataclass
class Sense:
    word: str
    sense_id: str
    synonyms: list[str]
    gloss: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.synonyms:
            raise InputError(f"sense {self.sense_id} of {self.word!r} has no synonyms")


class SynsetTable:
    """word -> senses; synonym lists give substitution and insertion material."""

    def __init__(self, senses: list[Sense]):
        self._by_word: dict[str, list[Sense]] = {}
        for sense in senses:
            self._by_word.setdefault(sense.word, []).append(sense)

    def senses_of(self, word: str) -> list[Sense]:
        if word not in self._by_word:
            raise InputError(f"word {word!r} not in synset table")
        return self._by_word[word]

    def __contains__(self, word: str) -> bool:
        return word in self._by_word

    def words(self) -> list[str]:
        return list(self._by_word)

    def all_senses(self) -> list[Sense]:
        return [s for senses in self._by_word.values() for s in senses]

    def save(self, path) -> None:
        lines = [f"{s.word}\t{s.sense_id}\t{','.join(s.synonyms)}"
                 for s in self.all_senses()]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SynsetTable":
        senses = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise InputError(f"{path}:{lineno}: expected word<TAB>sense<TAB>synonyms")
            word, sense_id, syns = parts
            senses.append(Sense(word=word, sense_id=sense_id, synonyms=syns.split(",")))
        return cls(senses)


@dataclass
class PivotTable:
    """One pivot language stand-in: word -> pivot form -> (collapsed) return word."""

    pivot_id: str
    forward: dict[str, str]
    reverse: dict[str, str]

    def save(self, fwd_path, rev_path) -> None:
        Path(fwd_path).write_text(
            "".join(f"{w}\t{p}\n" for w, p in self.forward.items()), encoding="utf-8")
        Path(rev_path).write_text(
            "".join(f"{p}\t{w}\n" for p, w in self.reverse.items()), encoding="utf-8")

    @classmethod
    def load(cls, pivot_id: str, fwd_path, rev_path) -> "PivotTable":
        def read(path):
            table = {}
            for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise InputError(f"{path}:{lineno}: expected two tab-separated fields")
                table[parts[0]] = parts[1]
            return table

        return cls(pivot_id=pivot_id, forward=read(fwd_path), reverse=read(rev_path))


@dataclass
class AugmentConfig:
    p_delete: float = 0.1
    n_insert: int = 1
    pivots: dict[str, PivotTable] = field(default_factory=dict)
    rotations: tuple[int, ...] = ROTATION_SET
    flip_prob: float = 0.5
    noise_sigma: float = 0.05
    master_seed: int = 42
    p_substitute: float = 0.5       # chance of swapping the target for a synonym
    p_back_translate: float = 0.5   # chance of a pivot round trip

    def __post_init__(self):
        if not 0.0 <= self.p_delete <= 1.0:
            raise ConfigError(f"p_delete must be in [0, 1], got {self.p_delete}")
        if self.n_insert < 0:
            raise ConfigError(f"n_insert must be >= 0, got {self.n_insert}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ConfigError(f"flip_prob must be in [0, 1], got {self.flip_prob}")
        if not 0.0 <= self.p_substitute <= 1.0:
            raise ConfigError(f"p_substitute must be in [0, 1], got {self.p_substitute}")
        if not 0.0 <= self.p_back_translate <= 1.0:
            raise ConfigError(f"p_back_translate must be in [0, 1], got {self.p_back_translate}")
        if not np.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be finite and >= 0, got {self.noise_sigma}")
        bad = set(self.rotations) - set(ROTATION_SET)
        if bad:
            raise ConfigError(f"rotations must be right angles, got {sorted(bad)}")


def derive_stream(master_seed: int, sample_id: str, kind: str, epoch: int = 0) -> Rng:
    """Stream for one (sample, technique); epoch picks a block within the stream."""
    return Rng(master_seed).child(sample_id, kind).child(epoch)


# ---------------------------------------------------------------------------
# text techniques
# ---------------------------------------------------------------------------

def random_insertion(tokens: list[str], n_insert: int, table: SynsetTable, rng: Rng,
                     target_index: int | None = None,
                     max_len: int | None = None) -> list[str]:
    """Insert synonyms of in-sentence anchor words at random positions.

    The target word is never used as an anchor, so its sense is not leaked
    into the inserted material. Returns a new list of length
    len(tokens) + n_insert (less if max_len truncates, with a warning).
    """
    if not tokens:
        raise InputError("random_insertion: empty token list")
    if max_len is not None and n_insert > max_len - len(tokens):
        logger.warning("random_insertion: truncating n_insert from %d to %d (max_len %d)",
                       n_insert, max(0, max_len - len(tokens)), max_len)
        n_insert = max(0, max_len - len(tokens))
    if n_insert == 0:
        return list(tokens)

    pool: list[str] = []
    seen = set()
    for idx, tok in enumerate(tokens):
        if idx == target_index or tok not in table:
            continue
        for sense in table.senses_of(tok):
            for syn in sense.synonyms:
                if syn not in seen:
                    seen.add(syn)
                    pool.append(syn)
    if not pool:
        pool = [tok for idx, tok in enumerate(tokens) if idx != target_index]
    if not pool:
        return list(tokens)

    out = list(tokens)
    for _ in range(n_insert):
        word = rng.choice(pool)
        out.insert(rng.randint(len(out) + 1), word)
    return out


def random_deletion(tokens: list[str], p_delete: float, protect: int, rng: Rng) -> list[str]:
    """Drop each non-target token with probability p_delete; the target survives."""
    if not tokens:
        raise InputError("random_deletion: empty token list")
    out = []
    for idx, tok in enumerate(tokens):
        if idx == protect or rng.uniform() >= p_delete:
            out.append(tok)
    return out


def back_translate(tokens: list[str], pivot: str, config: AugmentConfig) -> list[str]:
    """Deterministic word-level round trip through a pivot table.

    Words missing from the tables pass through unchanged; words present
    come back as their synonym-group representative, which may differ from
    the original (the paraphrase effect). Applying the round trip twice is
    identical to applying it once.
    """
    table = config.pivots.get(pivot)
    if table is None:
        raise ConfigError(f"unknown back-translation pivot {pivot!r}; "
                          f"have {sorted(config.pivots)}")
    out = []
    for tok in tokens:
        pivot_form = table.forward.get(tok)
        if pivot_form is None:
            out.append(tok)
        else:
            out.append(table.reverse.get(pivot_form, tok))
    return out


def lexical_substitute(tokens: list[str], target_index: int, table: SynsetTable,
                       rng: Rng, sense_id: str | None = None) -> list[str]:
    """Replace the target word with a uniformly drawn same-sense synonym."""
    if not 0 <= target_index < len(tokens):
        raise InputError(f"lexical_substitute: target index {target_index} out of range")
    word = tokens[target_index]
    senses = table.senses_of(word)  # raises InputError when absent
    sense = None
    if sense_id is not None:
        sense = next((s for s in senses if s.sense_id == sense_id), None)
    if sense is None:
        sense = rng.choice(senses)
    out = list(tokens)
    out[target_index] = rng.choice(sense.synonyms)
    return out


# ---------------------------------------------------------------------------
# image techniques
# ---------------------------------------------------------------------------

def rotate_right_angle(img: np.ndarray, degrees: int) -> np.ndarray:
    """Clockwise rotation by a multiple of 90 degrees (exact pixel permutation)."""
    if degrees % 90:
        raise ConfigError(f"rotation must be a right angle, got {degrees}")
    return np.rot90(img, k=-(degrees // 90) % 4).copy()


def horizontal_flip(img: np.ndarray) -> np.ndarray:
    return img[:, ::-1].copy()


def augment_image(img: np.ndarray, config: AugmentConfig, rng: Rng) -> np.ndarray:
    """Rotation, then flip-with-probability, then Gaussian noise, clamped to [0, 1]."""
    out = rotate_right_angle(img, config.rotations[rng.randint(len(config.rotations))])
    if rng.uniform() < config.flip_prob:
        out = horizontal_flip(out)
    if config.noise_sigma > 0:
        noise = config.noise_sigma * rng.normals(out.size).reshape(out.shape)
        out = np.clip(out + noise, 0.0, 1.0)
    return out


def dot_similarity(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise DimensionError(f"dot_similarity: need equal-length vectors, got {u.shape} "
                             f"and {v.shape}")
    return float(u @ v)
