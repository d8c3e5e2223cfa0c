import math

import numpy as np
import pytest
import torch

from helpers import cross_entropy_oracle
from triact.losses import LossWeights, cross_entropy, multi_task_loss, total_loss


def test_uniform_logits_give_log_n():
    loss = cross_entropy(torch.zeros(4, dtype=torch.float64), 2)
    assert abs(loss.item() - math.log(4)) < 1e-9
    assert abs(loss.item() - 1.3862943611198906) < 1e-9


def test_confident_correct_prediction():
    loss = cross_entropy(torch.tensor([10.0, -10.0], dtype=torch.float64), 0)
    assert loss.item() == pytest.approx(2.061153622438558e-9, rel=1e-6)


def test_matches_arbitrary_precision_oracle():
    rng = np.random.default_rng(12)
    for n in (4, 15, 99):
        for _ in range(100):
            logits = rng.normal(0.0, 5.0, size=n)
            target = int(rng.integers(n))
            got = cross_entropy(torch.tensor(logits, dtype=torch.float64), target)
            want = cross_entropy_oracle(logits, target)
            assert abs(got.item() - want) < 1e-9


def test_shift_invariance():
    rng = np.random.default_rng(4)
    for _ in range(50):
        logits = torch.tensor(rng.normal(0.0, 3.0, size=10), dtype=torch.float64)
        target = int(rng.integers(10))
        base = cross_entropy(logits, target).item()
        for c in (-200.0, -1.0, 0.5, 300.0):
            shifted = cross_entropy(logits + c, target).item()
            assert abs(shifted - base) < 1e-9


def test_large_logits_do_not_overflow():
    loss = cross_entropy(torch.tensor([1000.0, 990.0, 980.0], dtype=torch.float64), 0)
    assert torch.isfinite(loss)
    want = cross_entropy_oracle([1000.0, 990.0, 980.0], 0)
    assert loss.item() == pytest.approx(want, abs=1e-9)


def test_gradient_is_softmax_minus_onehot():
    rng = np.random.default_rng(8)
    for _ in range(30):
        n = int(rng.integers(2, 20))
        logits = torch.tensor(rng.normal(size=n), dtype=torch.float64, requires_grad=True)
        target = int(rng.integers(n))
        cross_entropy(logits, target).backward()
        expected = torch.softmax(logits.detach(), dim=0)
        expected[target] -= 1.0
        assert torch.allclose(logits.grad, expected, atol=1e-12)


def test_batch_reduction_is_mean():
    rng = np.random.default_rng(3)
    logits = torch.tensor(rng.normal(size=(6, 7)), dtype=torch.float64)
    targets = torch.tensor(rng.integers(7, size=6))
    batched = cross_entropy(logits, targets).item()
    singles = [cross_entropy(logits[i], int(targets[i])).item() for i in range(6)]
    assert batched == pytest.approx(sum(singles) / 6, abs=1e-12)


def test_total_loss_example():
    w = LossWeights()
    assert w.as_dict() == {"event": 1.0, "set": 2.0, "element": 4.0}
    assert total_loss(1.0, 2.0, 3.0, w) == pytest.approx(17.0, abs=0)


def test_total_loss_degenerates_to_single_level():
    w = LossWeights(event=1.0, set=0.0, element=0.0)
    assert total_loss(0.7, 5.0, 9.0, w) == pytest.approx(0.7, abs=0)


def test_total_loss_matches_dot_oracle():
    import mpmath as mp

    rng = np.random.default_rng(77)
    for _ in range(200):
        weights = LossWeights(*(float(x) for x in rng.uniform(0.01, 10.0, size=3)))
        values = [float(v) for v in rng.uniform(0.0, 20.0, size=3)]
        got = total_loss(values[0], values[1], values[2], weights)
        with mp.workdps(40):
            want = float(
                mp.fsum(
                    mp.mpf(repr(w)) * mp.mpf(repr(v))
                    for w, v in zip(
                        (weights.event, weights.set, weights.element), values
                    )
                )
            )
        assert abs(got - want) < 1e-12


def test_multi_task_loss_combines_levels():
    rng = np.random.default_rng(5)
    logits = {
        "event": torch.tensor(rng.normal(size=(4, 2)), dtype=torch.float64),
        "set": torch.tensor(rng.normal(size=(4, 4)), dtype=torch.float64),
        "element": torch.tensor(rng.normal(size=(4, 8)), dtype=torch.float64),
    }
    targets = {
        "event": torch.tensor([0, 1, 0, 1]),
        "set": torch.tensor([0, 1, 2, 3]),
        "element": torch.tensor([0, 2, 4, 6]),
    }
    weights = LossWeights()
    per_level, total = multi_task_loss(logits, targets, weights)
    recombined = (
        1.0 * per_level["event"] + 2.0 * per_level["set"] + 4.0 * per_level["element"]
    )
    assert total.item() == pytest.approx(recombined.item(), abs=1e-12)
    for lvl in ("event", "set", "element"):
        want = cross_entropy(logits[lvl], targets[lvl]).item()
        assert per_level[lvl].item() == pytest.approx(want, abs=0)


def test_weight_validation():
    with pytest.raises(ValueError):
        LossWeights(event=-1.0)
    with pytest.raises(ValueError):
        LossWeights(event=0.0, set=0.0, element=0.0)


def test_input_validation():
    with pytest.raises(ValueError):
        cross_entropy(torch.tensor([1.0]), 0)  # single class
    with pytest.raises(ValueError):
        cross_entropy(torch.tensor([1.0, float("nan")]), 0)
    with pytest.raises(ValueError):
        cross_entropy(torch.tensor([1.0, float("inf")]), 0)
    with pytest.raises(ValueError):
        cross_entropy(torch.zeros(4), 4)  # target out of range
    with pytest.raises(ValueError):
        cross_entropy(torch.zeros(4), -1)
    with pytest.raises(ValueError):
        cross_entropy(torch.zeros(2, 3, 4), 0)
    with pytest.raises(ValueError):
        cross_entropy(torch.zeros(2, 4), torch.tensor([0, 1, 2]))
