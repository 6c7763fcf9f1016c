"""Loss, gradients and the SGD loop for the learned metric.

Training regresses the stream difference onto the crowdsourced relative
saliency score with a mean-square loss. Anchor triplets (ground truth vs a
random map) add two bound terms pushing score(G,G) toward 1 and score(R,G)
toward 0; their three loss values are summed directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import Diverged
from ..judgments import JudgmentDataset, metric_accuracy
from ..metrics import Polarity
from .network import (
    CpjConfig,
    CpjNetwork,
    activation_signature,
    backward_batch,
    forward_batch,
    same_signature,
    score_many,
    stack_input,
)


@dataclass(frozen=True)
class TrainingTriplet:
    """One (A, B, G) comparison with its relative saliency target."""

    a: np.ndarray
    b: np.ndarray
    g: np.ndarray
    r: float
    is_anchor: bool = False

    def __post_init__(self):
        if not -1.0 <= self.r <= 1.0:
            raise ValueError(f"relative score must be in [-1,1], got {self.r}")
        if self.is_anchor:
            if self.r != 1.0:
                raise ValueError("anchor triplets have a fixed relative score of 1")
            if not np.array_equal(self.a, self.g):
                raise ValueError("anchor triplets compare the ground truth against itself")

    def swapped(self) -> "TrainingTriplet":
        return TrainingTriplet(self.b, self.a, self.g, -self.r, False)


def _batch_inputs(net: CpjNetwork, triplets) -> np.ndarray:
    res = net.config.input_res
    xs = [stack_input(t.a, t.g, res) for t in triplets]
    xs += [stack_input(t.b, t.g, res) for t in triplets]
    return np.stack(xs)


def _score_pairs(net: CpjNetwork, triplets, keep_cache: bool):
    s, cache = forward_batch(net, _batch_inputs(net, triplets), keep_cache=keep_cache)
    n = len(triplets)
    return s[:n], s[n:], cache


def _loss_grads_arrays(net: CpjNetwork, x: np.ndarray, r: np.ndarray, anchor: np.ndarray):
    """Loss pieces for a pre-stacked batch: x holds N (a,g) then N (b,g) inputs."""
    s, cache = forward_batch(net, x, keep_cache=True)
    n = r.size
    sa, sb = s[:n], s[n:]
    d = sa - sb
    losses = 0.5 * (d - r) ** 2 + np.where(anchor, 0.5 * (1.0 - sa) ** 2 + 0.5 * sb**2, 0.0)
    dsa = (d - r) + np.where(anchor, sa - 1.0, 0.0)
    dsb = -(d - r) + np.where(anchor, sb, 0.0)
    return float(losses.mean()), np.concatenate([dsa, dsb]) / n, cache


def triplet_losses(sa: np.ndarray, sb: np.ndarray, triplets) -> np.ndarray:
    r = np.array([t.r for t in triplets])
    anchor = np.array([t.is_anchor for t in triplets])
    d = sa - sb
    losses = 0.5 * (d - r) ** 2
    losses += np.where(anchor, 0.5 * (1.0 - sa) ** 2 + 0.5 * sb**2, 0.0)
    return losses


def loss(net: CpjNetwork, triplet: TrainingTriplet) -> float:
    """Loss of a single triplet under the current parameters."""
    sa, sb, _ = _score_pairs(net, [triplet], keep_cache=False)
    return float(triplet_losses(sa, sb, [triplet])[0])


def _loss_grads(net: CpjNetwork, triplets, keep_cache: bool = True):
    """(mean loss, dL/dscore vector over the 2N stacked stream outputs, cache)."""
    sa, sb, cache = _score_pairs(net, triplets, keep_cache=keep_cache)
    n = len(triplets)
    r = np.array([t.r for t in triplets])
    anchor = np.array([t.is_anchor for t in triplets])
    d = sa - sb
    mean_loss = float(triplet_losses(sa, sb, triplets).mean())
    dsa = (d - r) + np.where(anchor, sa - 1.0, 0.0)
    dsb = -(d - r) + np.where(anchor, sb, 0.0)
    dscore = np.concatenate([dsa, dsb]) / n
    return mean_loss, dscore, cache


def gradients(net: CpjNetwork, batch) -> tuple[float, dict[str, np.ndarray]]:
    """Mean batch loss and its exact gradient for every parameter.

    Shared-stream contributions are summed automatically because both stream
    evaluations run through the same parameter set in one stacked batch.
    """
    batch = list(batch)
    if not batch:
        raise ValueError("gradients needs a non-empty batch")
    mean_loss, dscore, cache = _loss_grads(net, batch)
    return mean_loss, backward_batch(net, cache, dscore)


@dataclass
class TrainingHistory:
    """Per-100-iteration mean loss and the learning rate in force."""

    rows: list[tuple[int, float, float]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)


def train(
    net: CpjNetwork,
    triplets,
    config: CpjConfig | None = None,
    log_every: int = 100,
) -> tuple[CpjNetwork, TrainingHistory]:
    """SGD with momentum and weight decay over the swap-augmented triplets.

    Non-anchor triplets are mirrored with negated targets; shuffling is
    seeded; the learning rate drops by lr_drop_factor when the windowed loss
    stops improving by 1% (at most two drops). Returns a trained copy.
    """
    config = config or net.config
    data = list(triplets)
    if not data:
        raise ValueError("train needs at least one triplet")
    data = data + [t.swapped() for t in data if not t.is_anchor]

    net = net.copy()
    rng = np.random.default_rng(np.random.SeedSequence([config.seed & 0x7FFFFFFF, 0x5D]))
    velocity = {name: np.zeros_like(p) for name, p in net.parameters()}
    params = dict(net.parameters())

    # stack every network input once; batches then just index and concatenate
    res = net.config.input_res
    xa = np.stack([stack_input(t.a, t.g, res) for t in data]).astype(net.dtype)
    xb = np.stack([stack_input(t.b, t.g, res) for t in data]).astype(net.dtype)
    targets = np.array([t.r for t in data])
    anchors = np.array([t.is_anchor for t in data])

    lr = config.learning_rate
    drops = 0
    history = TrainingHistory()
    window: list[float] = []
    prev_window_mean: float | None = None
    recent: list[float] = []

    order = rng.permutation(len(data))
    cursor = 0
    for it in range(1, config.max_iterations + 1):
        if cursor >= len(order):
            order = rng.permutation(len(data))
            cursor = 0
        idx = order[cursor : cursor + config.batch_size]
        cursor += config.batch_size

        x = np.concatenate([xa[idx], xb[idx]])
        batch_loss, dscore, cache = _loss_grads_arrays(net, x, targets[idx], anchors[idx])
        grads = backward_batch(net, cache, dscore)
        if not np.isfinite(batch_loss):
            raise Diverged(f"non-finite loss at iteration {it}")
        for name, p in params.items():
            g = grads[name] + config.weight_decay * p
            v = velocity[name]
            v *= config.momentum
            v += lr * g
            p -= v

        recent.append(batch_loss)
        window.append(batch_loss)
        if it % log_every == 0 or it == config.max_iterations:
            history.rows.append((it, float(np.mean(recent)), lr))
            recent = []
        if len(window) >= config.plateau_patience:
            cur = float(np.mean(window))
            if prev_window_mean is not None and drops < 2 and cur > 0.99 * prev_window_mean:
                lr *= config.lr_drop_factor
                drops += 1
            prev_window_mean = cur
            window = []
    return net, history


def pairwise_accuracy(net: CpjNetwork, dataset: JudgmentDataset, maps) -> float:
    """Prediction accuracy of the learned metric on a judgment dataset.

    maps resolves every (map_id, image_id) pair referenced by the records
    (model ids repeat across images, so the image disambiguates). Scores are
    computed once per unique (esm, gsm, image) combination, then fed through
    the standard confidence-weighted accuracy.
    """
    wanted: list[tuple[str, str, str]] = []
    seen = set()
    for rec in dataset.records:
        for side_id in (rec.esm_a_id, rec.esm_b_id):
            key = (side_id, rec.gsm_id, rec.image_id)
            if key not in seen:
                seen.add(key)
                wanted.append(key)
    values = score_many(net, [(maps[(e, img)], maps[(g, img)]) for e, g, img in wanted])
    by_pair = dict(zip(wanted, values))
    scores = {}
    for rec in dataset.records:
        scores[(rec.question_id, "a")] = float(by_pair[(rec.esm_a_id, rec.gsm_id, rec.image_id)])
        scores[(rec.question_id, "b")] = float(by_pair[(rec.esm_b_id, rec.gsm_id, rec.image_id)])
    return metric_accuracy(Polarity.HIGHER_BETTER, scores, dataset)


def anchor_ordering_fractions(
    net: CpjNetwork, gsms, esms, randoms
) -> tuple[float, float]:
    """Fractions of instances with score(G,G) > score(E,G) and score(E,G) > score(R,G)."""
    triples = list(zip(gsms, esms, randoms))
    sg = score_many(net, [(g, g) for g, _, _ in triples])
    se = score_many(net, [(e, g) for g, e, _ in triples])
    sr = score_many(net, [(r, g) for g, _, r in triples])
    return float((sg > se).mean()), float((se > sr).mean())


def gradient_check(
    net: CpjNetwork,
    batch,
    n_probes: int = 96,
    h: float = 1e-4,
    seed: int = 0,
) -> tuple[float, int, int]:
    """Central-difference check of the analytic gradients.

    Probes a seeded sample of parameters across every tensor. A probe whose
    +h/-h evaluations land on different linear pieces (any ReLU mask or pool
    argmax flips) straddles a kink where the quotient is meaningless; such
    probes are skipped and counted. Returns (max relative error, checked,
    skipped).
    """
    batch = list(batch)
    base_loss, grads = gradients(net, batch)
    _, _, base_cache = _loss_grads(net, batch)
    base_sig = activation_signature(base_cache)

    rng = np.random.default_rng(seed)
    tensors = net.parameters()
    probes = []
    per_tensor = max(1, n_probes // len(tensors))
    for name, p in tensors:
        for flat in rng.choice(p.size, size=min(per_tensor, p.size), replace=False):
            probes.append((name, int(flat)))

    params = dict(tensors)
    max_rel = 0.0
    checked = 0
    skipped = 0
    for name, flat in probes:
        p = params[name]
        idx = np.unravel_index(flat, p.shape)
        keep = p[idx]
        vals = []
        ok = True
        for delta in (h, -h):
            p[idx] = keep + delta
            fwd_loss, _, cache = _loss_grads(net, batch, keep_cache=True)
            if not same_signature(base_sig, activation_signature(cache)):
                ok = False
            vals.append(fwd_loss)
        p[idx] = keep
        if not ok:
            skipped += 1
            continue
        fd = (vals[0] - vals[1]) / (2.0 * h)
        an = float(grads[name][idx])
        denom = max(abs(fd), abs(an), 1e-8)
        max_rel = max(max_rel, abs(fd - an) / denom)
        checked += 1
    return max_rel, checked, skipped
