"""Scoring head, training loss, and ranking metrics.

Each candidate's node feature maps through one linear unit and a sigmoid
to a probability; the squeeze to a flat vector is part of the contract.
Ranking uses a deterministic tie-break (earlier candidate index wins) so
metrics never depend on sort stability.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError, InputError
from .rng import Rng


@dataclass
class MetricsReport:
    accuracy: float
    mrr: float
    n_samples: int
    seed: int = 0
    config_hash: str = ""

    def __post_init__(self):
        if not (0.0 <= self.accuracy <= 1.0 and 0.0 <= self.mrr <= 1.0):
            raise InputError(f"metrics out of range: acc={self.accuracy}, mrr={self.mrr}")
        if self.mrr + 1e-12 < self.accuracy:
            raise InputError("mrr cannot be below accuracy (rank 1 contributes 1 to both)")


def score_candidates(node_features: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """sigmoid(h . w + b) per node, squeezed: (n, d) -> (n,) or (B, n, d) -> (B, n)."""
    h = ad.as_tensor(node_features)
    if h.shape[-1] != weight.shape[0]:
        raise DimensionError(
            f"score_candidates: feature dim {h.shape[-1]} vs head weight {tuple(weight.shape)}")
    logits = ad.add(ad.matmul(h, weight), bias)
    return ad.sigmoid(ad.reshape(logits, h.shape[:-1]))


def bce_loss(probs: Tensor, gold: int, pos_weight: float = 1.0) -> Tensor:
    """Mean binary cross-entropy over candidates, target 1 at gold, 0 elsewhere."""
    probs = ad.as_tensor(probs)
    if probs.ndim != 1:
        raise DimensionError(f"bce_loss: expected a flat score vector, got {probs.shape}")
    n = probs.shape[0]
    if not 0 <= gold < n:
        raise InputError(f"bce_loss: gold index {gold} out of range [0, {n})")
    targets = np.zeros(n)
    targets[gold] = 1.0
    per = ad.binary_cross_entropy(probs, ad.constant(targets))
    if pos_weight != 1.0:
        weights = np.ones(n)
        weights[gold] = pos_weight
        per = ad.mul(per, ad.constant(weights))
    return ad.mean_over_axis(per, 0)


def rank_of(scores, gold: int) -> int:
    """1 + strictly-higher count + equal-score-with-lower-index count."""
    scores = np.asarray(scores, dtype=float)
    gold_score = scores[gold]
    higher = int((scores > gold_score).sum())
    tied_before = int((scores[:gold] == gold_score).sum())
    return 1 + higher + tied_before


def rank_and_metrics(score_lists, golds, seed: int = 0, config_hash: str = "") -> MetricsReport:
    """Per-sample rank of the gold candidate -> accuracy and mean reciprocal rank."""
    score_lists = list(score_lists)
    golds = list(golds)
    if not score_lists or len(score_lists) != len(golds):
        raise InputError(
            f"rank_and_metrics: need matching non-empty inputs, got {len(score_lists)} "
            f"score lists and {len(golds)} golds")
    hits = 0
    reciprocal = 0.0
    for scores, gold in zip(score_lists, golds):
        scores = np.asarray(scores, dtype=float)
        if not 0 <= gold < len(scores):
            raise InputError(f"rank_and_metrics: gold {gold} out of range for {len(scores)} scores")
        r = rank_of(scores, gold)
        hits += r == 1
        reciprocal += 1.0 / r
    n = len(golds)
    return MetricsReport(accuracy=hits / n, mrr=reciprocal / n, n_samples=n,
                         seed=seed, config_hash=config_hash)


METRICS_CSV_FIELDS = ("run_id", "split", "accuracy", "mrr", "n_samples", "seed", "config_hash")


def metrics_csv_row(run_id: str, split: str, report: MetricsReport) -> list[str]:
    return [run_id, split, repr(report.accuracy), repr(report.mrr),
            str(report.n_samples), str(report.seed), report.config_hash]


def write_metrics_csv(path, rows: list[list[str]]) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_CSV_FIELDS)
        writer.writerows(rows)


def random_ranking_expectation(n_candidates: int = 10, trials: int = 100_000,
                               seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo accuracy/MRR of uniformly random scores (oracle for baselines)."""
    rng = Rng(seed)
    hits = 0
    reciprocal = 0.0
    for _ in range(trials):
        gold = rng.randint(n_candidates)
        scores = rng.uniforms(n_candidates)
        r = rank_of(scores, gold)
        hits += r == 1
        reciprocal += 1.0 / r
    return hits / trials, reciprocal / trials
