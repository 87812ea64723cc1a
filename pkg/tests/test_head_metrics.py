import csv

import numpy as np
import pytest

from vwsd import autodiff as ad
from vwsd.autodiff import Tape, Tensor, backward, grad_check
from vwsd.errors import DimensionError, InputError
from vwsd.head_metrics import (
    MetricsReport,
    bce_loss,
    metrics_csv_row,
    rank_and_metrics,
    rank_of,
    random_ranking_expectation,
    score_candidates,
    write_metrics_csv,
)
from vwsd.rng import Rng

H10_OVER_10 = sum(1.0 / r for r in range(1, 11)) / 10  # 0.29289682...


def sort_based_rank(scores, gold):
    """Oracle: stable sort by (-score, index); rank = position of gold + 1."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order.index(gold) + 1


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------

def test_zero_head_scores_half():
    h = Tensor(Rng(0).normals(10 * 4).reshape(10, 4))
    probs = score_candidates(h, Tensor(np.zeros((4, 1))), Tensor(np.zeros(1)))
    assert probs.shape == (10,)
    assert np.array_equal(probs.data, np.full(10, 0.5))


def test_scores_monotone_in_logit():
    w = Tensor(Rng(1).normals(4).reshape(4, 1))
    b = Tensor(np.zeros(1))
    h = Tensor(Rng(2).normals(10 * 4).reshape(10, 4))
    logits = (h.data @ w.data).ravel() + b.data
    probs = score_candidates(h, w, b).data
    order_l = np.argsort(logits)
    order_p = np.argsort(probs)
    assert np.array_equal(order_l, order_p)
    assert ((probs > 0) & (probs < 1)).all()


def test_scores_batched_shape():
    h = Tensor(np.zeros((3, 10, 4)))
    probs = score_candidates(h, Tensor(np.zeros((4, 1))), Tensor(np.zeros(1)))
    assert probs.shape == (3, 10)


def test_score_dim_mismatch():
    with pytest.raises(DimensionError):
        score_candidates(Tensor(np.zeros((10, 4))), Tensor(np.zeros((5, 1))),
                         Tensor(np.zeros(1)))


def test_gradient_through_score_and_loss():
    rng = Rng(3)
    h = ad.parameter(rng.normals(3 * 4).reshape(3, 4))
    w = ad.parameter(rng.normals(4).reshape(4, 1))
    b = ad.parameter(np.zeros(1))

    def f():
        return bce_loss(score_candidates(h, w, b), gold=1)

    report = grad_check(f, {"h": h, "w": w, "b": b}, h=1e-6, tol=1e-6)
    assert report.passed, report.max_rel_err


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def test_perfect_prediction_loss_near_zero():
    probs = Tensor(np.array([1.0] + [0.0] * 9))
    loss = bce_loss(probs, gold=0)
    assert loss.item() < 1e-9


def test_uniform_half_loss_is_ln2():
    probs = Tensor(np.full(10, 0.5))
    for gold in (0, 3, 9):
        assert abs(bce_loss(probs, gold).item() - np.log(2.0)) < 1e-15


def test_loss_permutation_covariant():
    rng = Rng(4)
    probs = 0.05 + 0.9 * rng.uniforms(10)
    gold = 4
    base = bce_loss(Tensor(probs), gold).item()
    perm = Rng(5).permutation(10)
    permuted = probs[perm]
    new_gold = perm.index(gold)
    assert abs(bce_loss(Tensor(permuted), new_gold).item() - base) < 1e-15


def test_loss_gold_out_of_range():
    with pytest.raises(InputError):
        bce_loss(Tensor(np.full(10, 0.5)), gold=10)


def test_pos_weight_scales_gold_term():
    probs = Tensor(np.full(4, 0.5))
    plain = bce_loss(probs, 0).item()
    weighted = bce_loss(probs, 0, pos_weight=3.0).item()
    assert abs(weighted - (plain + 2 * np.log(2.0) / 4)) < 1e-12


def test_loss_backward_reaches_probs():
    probs = ad.parameter(np.full(5, 0.5))
    with Tape():
        grads = backward(bce_loss(probs, 2))
    g = grads[probs.node_id].data
    assert g[2] < 0 and (np.delete(g, 2) > 0).all()


# ---------------------------------------------------------------------------
# ranking and metrics
# ---------------------------------------------------------------------------

def test_rank_counting_rule_with_ties():
    scores = [0.3, 0.5, 0.5, 0.1]
    assert rank_of(scores, 1) == 1      # tied with index 2 but earlier wins
    assert rank_of(scores, 2) == 2
    assert rank_of(scores, 0) == 3
    assert rank_of(scores, 3) == 4


def test_perfect_ranking_metrics():
    scores = [[1.0] + [0.0] * 9] * 5
    golds = [0] * 5
    report = rank_and_metrics(scores, golds)
    assert report.accuracy == 1.0 and report.mrr == 1.0


def test_hand_mrr_case():
    # gold ranks 1, 2, 4  ->  MRR = (1 + 1/2 + 1/4) / 3 = 7/12
    scores = [
        [0.9, 0.1, 0.2, 0.3],   # gold 0 -> rank 1
        [0.9, 0.8, 0.2, 0.3],   # gold 1 -> rank 2
        [0.9, 0.8, 0.7, 0.3],   # gold 3 -> rank 4
    ]
    report = rank_and_metrics(scores, [0, 1, 3])
    assert abs(report.mrr - 7 / 12) < 1e-15
    assert abs(report.accuracy - 1 / 3) < 1e-15


def test_matches_sort_based_oracle_on_random_matrices():
    rng = Rng(6)
    for _ in range(100):
        scores = rng.uniforms(10)
        if rng.uniform() < 0.5:  # force ties
            scores = np.round(scores, 1)
        gold = rng.randint(10)
        assert rank_of(scores, gold) == sort_based_rank(scores.tolist(), gold)


def test_monte_carlo_uniform_baseline():
    acc, mrr = random_ranking_expectation(10, trials=100_000, seed=9)
    assert abs(acc - 0.1) < 0.01
    assert abs(mrr - H10_OVER_10) < 0.005


def test_strictly_increasing_transform_invariance():
    rng = Rng(10)
    scores = [rng.uniforms(10) for _ in range(20)]
    golds = [rng.randint(10) for _ in range(20)]
    base = rank_and_metrics(scores, golds)
    squashed = [1.0 / (1.0 + np.exp(-(3 * s + 1))) for s in scores]
    after = rank_and_metrics(squashed, golds)
    assert base.accuracy == after.accuracy and base.mrr == after.mrr


def test_metrics_order_independent():
    rng = Rng(11)
    scores = [rng.uniforms(10) for _ in range(30)]
    golds = [rng.randint(10) for _ in range(30)]
    fwd = rank_and_metrics(scores, golds)
    rev = rank_and_metrics(scores[::-1], golds[::-1])
    assert fwd.accuracy == rev.accuracy and abs(fwd.mrr - rev.mrr) < 1e-15


def test_metrics_input_validation():
    with pytest.raises(InputError):
        rank_and_metrics([], [])
    with pytest.raises(InputError):
        rank_and_metrics([[0.5, 0.5]], [2])
    with pytest.raises(InputError):
        MetricsReport(accuracy=0.9, mrr=0.5, n_samples=10)


def test_mrr_bounds():
    rng = Rng(12)
    scores = [rng.uniforms(10) for _ in range(50)]
    golds = [rng.randint(10) for _ in range(50)]
    report = rank_and_metrics(scores, golds)
    assert 1 / 10 <= report.mrr <= 1.0
    assert report.mrr >= report.accuracy


# ---------------------------------------------------------------------------
# csv serialization
# ---------------------------------------------------------------------------

def test_metrics_csv_roundtrip(tmp_path):
    report = MetricsReport(accuracy=0.8, mrr=0.85, n_samples=500, seed=42,
                           config_hash="abc123")
    row = metrics_csv_row("run1", "test", report)
    path = tmp_path / "metrics.csv"
    write_metrics_csv(path, [row])
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["run_id", "split", "accuracy", "mrr", "n_samples", "seed",
                       "config_hash"]
    assert rows[1] == ["run1", "test", "0.8", "0.85", "500", "42", "abc123"]
    write_metrics_csv(tmp_path / "again.csv", [row])
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()
