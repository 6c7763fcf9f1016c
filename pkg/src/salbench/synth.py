"""Synthetic ground truth, degraded maps and simulated annotators.

Desk-scale substitutes for eye-tracking stimuli and human subjects: seeded
fixation generators, Gaussian fixation-density maps, a five-kind degradation
ladder standing in for distinct saliency models, and a logistic annotator
model producing pairwise judgments.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .errors import EmptyFixations, EmptyInput
from .judgments import Answer
from .maps import FixationSet, as_map, minmax_normalize


class DegradationKind(enum.Enum):
    BLUR = "blur"
    NOISE = "noise"
    SHIFT = "shift"
    DROPOUT = "dropout"
    BORDER_POP = "border_pop"


@dataclass(frozen=True)
class DegradationSpec:
    kind: DegradationKind
    level: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.level <= 1.0:
            raise ValueError(f"degradation level must be in [0,1], got {self.level}")


@dataclass(frozen=True)
class AnnotatorModel:
    """n_subjects independent annotators with logistic choice noise (beta)."""

    n_subjects: int
    beta: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ValueError("need at least one subject")
        if not self.beta > 0:
            raise ValueError("beta must be positive")


def gen_fixations(
    seed: int,
    n_points: int,
    w: int,
    h: int,
    center_bias_sigma: float,
    image_id: str = "synthetic",
) -> FixationSet:
    """Center-biased fixations: a central Gaussian plus a few off-center clusters.

    Cluster centers are themselves drawn around the image center with spread
    center_bias_sigma, so the sigma -> 0 limit collapses every point onto the
    center pixel.
    """
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    rng = np.random.default_rng(seed)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    n_clusters = int(rng.integers(1, 4))
    centers = np.column_stack(
        [
            cx + rng.normal(0.0, center_bias_sigma, n_clusters),
            cy + rng.normal(0.0, center_bias_sigma, n_clusters),
        ]
    )
    # component 0 = the central blob, then the clusters, equal odds each
    pick = rng.integers(0, n_clusters + 1, n_points)
    base = np.where(pick[:, None] == 0, np.array([[cx, cy]]), centers[np.maximum(pick - 1, 0)])
    spread = np.where(pick[:, None] == 0, center_bias_sigma, 0.35 * center_bias_sigma)
    pts = base + rng.normal(0.0, 1.0, (n_points, 2)) * spread
    xs = np.clip(np.rint(pts[:, 0]), 0, w - 1).astype(np.int64)
    ys = np.clip(np.rint(pts[:, 1]), 0, h - 1).astype(np.int64)
    return FixationSet(image_id, np.column_stack([xs, ys]))


def _density(points: np.ndarray, w: int, h: int, sigma: float) -> np.ndarray:
    acc = np.zeros((h, w))
    np.add.at(acc, (points[:, 1], points[:, 0]), 1.0)
    return ndimage.gaussian_filter(acc, sigma, mode="constant")


def fixations_to_gsm(fix: FixationSet, sigma: float, w: int, h: int) -> np.ndarray:
    """Fixation density map: one unit of Gaussian mass per fixation, min-max normalized."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if len(fix) == 0:
        raise EmptyFixations(f"image '{fix.image_id}' has no fixations")
    fix.check_bounds(w, h)
    return minmax_normalize(_density(fix.points, w, h, sigma))


def raw_density(fix: FixationSet, sigma: float, w: int, h: int) -> np.ndarray:
    """Unnormalized fixation density (integrates to ~len(fix) away from borders)."""
    if len(fix) == 0:
        raise EmptyFixations(f"image '{fix.image_id}' has no fixations")
    fix.check_bounds(w, h)
    return _density(fix.points, w, h, sigma)


def avg_map(fixation_sets: Sequence[FixationSet], w: int, h: int, sigma: float) -> np.ndarray:
    """Mean of the per-image density maps, min-max normalized (the AVG model)."""
    if not fixation_sets:
        raise EmptyInput("avg_map needs at least one fixation set")
    acc = np.zeros((h, w))
    for fix in fixation_sets:
        acc += fixations_to_gsm(fix, sigma, w, h)
    return minmax_normalize(acc / len(fixation_sets))


def random_map(seed: int, w: int, h: int) -> np.ndarray:
    """I.i.d. uniform 8-bit intensities scaled to [0, 1]."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(h, w)).astype(np.float64) / 255.0


def _edge_energy(gsm: np.ndarray) -> np.ndarray:
    gx = ndimage.sobel(gsm, axis=1, mode="nearest")
    gy = ndimage.sobel(gsm, axis=0, mode="nearest")
    return minmax_normalize(np.hypot(gx, gy))


def degrade(gsm: np.ndarray, spec: DegradationSpec) -> np.ndarray:
    """Apply one graded degradation; level 0 returns the input unchanged.

    blur: Gaussian smoothing, sigma proportional to level.
    noise: additive uniform noise, amplitude proportional to level.
    shift: translation by level * 0.5 * min(W, H) in a seeded direction.
    dropout: zero the top pixels carrying a level-fraction of total mass.
    border_pop: blend toward the edge-energy map of the input.
    """
    g = as_map(gsm)
    if spec.level == 0.0:
        return g.copy()
    h, w = g.shape
    rng = np.random.default_rng(spec.seed)
    if spec.kind is DegradationKind.BLUR:
        return ndimage.gaussian_filter(g, spec.level * 0.12 * min(w, h), mode="nearest")
    if spec.kind is DegradationKind.NOISE:
        span = g.max() - g.min()
        return g + rng.uniform(0.0, 1.0, g.shape) * (spec.level * max(span, 1e-12))
    if spec.kind is DegradationKind.SHIFT:
        angle = rng.uniform(0.0, 2.0 * np.pi)
        r = spec.level * 0.5 * min(w, h)
        return np.maximum(
            ndimage.shift(g, (r * np.sin(angle), r * np.cos(angle)), order=1, mode="constant"),
            0.0,
        )
    if spec.kind is DegradationKind.DROPOUT:
        flat = g.ravel().copy()
        order = np.argsort(-flat, kind="stable")
        cum = np.cumsum(flat[order])
        total = cum[-1]
        if total > 0:
            k = int(np.searchsorted(cum, spec.level * total, side="left")) + 1
            flat[order[:k]] = 0.0
        return flat.reshape(g.shape)
    if spec.kind is DegradationKind.BORDER_POP:
        return (1.0 - spec.level) * g + spec.level * _edge_energy(g) * max(g.max(), 1e-12)
    raise ValueError(f"unknown degradation kind {spec.kind}")


def simulate_answers(
    a: np.ndarray,
    b: np.ndarray,
    g: np.ndarray,
    annotators: AnnotatorModel,
    quality_fn: Callable[[np.ndarray, np.ndarray], float],
    question_salt: int = 0,
) -> tuple[Answer, ...]:
    """Each subject independently prefers A with logistic probability.

    P(choose A) = sigmoid(beta * (quality(a, g) - quality(b, g))); an infinite
    beta yields the noiseless oracle annotator.
    """
    dq = quality_fn(a, g) - quality_fn(b, g)
    if dq == 0.0:
        p = 0.5
    else:
        z = annotators.beta * dq
        if np.isinf(z):
            p = 1.0 if z > 0 else 0.0
        else:
            p = 1.0 / (1.0 + np.exp(-z))
    rng = np.random.default_rng(
        np.random.SeedSequence([annotators.seed & 0x7FFFFFFF, question_salt & 0x7FFFFFFF])
    )
    draws = rng.random(annotators.n_subjects)
    return tuple(
        Answer(f"s{i:02d}", bool(draws[i] < p), 5000) for i in range(annotators.n_subjects)
    )
