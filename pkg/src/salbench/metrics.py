"""The ten classic fixation-prediction metrics.

Each metric scores one prepared (ESM, GSM) pair, optionally against the
fixations behind the GSM and a dataset-level evaluation context. Sampling
metrics draw from a per-call generator seeded from the context, so a fixed
seed gives bit-identical scores.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import ndimage

from .errors import (
    AllZeroMap,
    EmptyFixations,
    InsufficientNegatives,
    ResolutionTooLarge,
    ZeroVariance,
)
from .maps import (
    FixationSet,
    MapPair,
    as_map,
    require_fixations,
    resize_bilinear,
    to_distribution,
)
from .transport import grid_emd

LOG_EPS = 1e-12
EMD_MAX_GRID = 48


class Polarity(enum.Enum):
    HIGHER_BETTER = "higher_better"
    LOWER_BETTER = "lower_better"


class MetricId(enum.Enum):
    AUC = "AUC"
    SAUC = "sAUC"
    RAUC = "rAUC"
    PRE = "PRE"
    NSS = "NSS"
    SIM = "SIM"
    CC = "CC"
    IG = "IG"
    KLD = "KLD"
    EMD = "EMD"

    @property
    def polarity(self) -> Polarity:
        if self in (MetricId.KLD, MetricId.EMD):
            return Polarity.LOWER_BETTER
        return Polarity.HIGHER_BETTER


@dataclass(frozen=True)
class EvalContext:
    """Dataset-level inputs for the sampling metrics and IG.

    dataset_fixations feeds the sAUC shuffle pool and the rAUC resampling
    density; baseline is the IG prior (stored as any non-negative map,
    converted to a distribution at use). Negative counts always match the
    positive count.
    """

    dataset_fixations: Mapping[str, FixationSet] = field(default_factory=dict)
    baseline: np.ndarray | None = None
    rng_seed: int = 0
    rauc_low_quantile: float = 0.25
    emd_grid_res: int = 32

    def rng(self, *salt: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.rng_seed & 0x7FFFFFFF, *salt]))


def center_prior(width: int, height: int, sigma_frac: float = 0.25) -> np.ndarray:
    """Isotropic Gaussian center prior with sigma = sigma_frac * min(W, H)."""
    sigma = max(sigma_frac * min(width, height), 1e-9)
    ys = np.arange(height) - (height - 1) / 2.0
    xs = np.arange(width) - (width - 1) / 2.0
    g = np.exp(-(ys[:, None] ** 2 + xs[None, :] ** 2) / (2.0 * sigma**2))
    return g


def default_baseline(
    dataset_fixations: Mapping[str, FixationSet], width: int, height: int
) -> np.ndarray:
    """IG baseline: smoothed dataset fixation density, else a center prior."""
    if dataset_fixations:
        acc = np.zeros((height, width))
        for fix in dataset_fixations.values():
            pts = fix.points
            ok = (pts[:, 0] >= 0) & (pts[:, 0] < width) & (pts[:, 1] >= 0) & (pts[:, 1] < height)
            np.add.at(acc, (pts[ok, 1], pts[ok, 0]), 1.0)
        if acc.sum() > 0:
            return ndimage.gaussian_filter(acc, 0.08 * min(width, height), mode="constant")
    return center_prior(width, height)


def _fix_indices(pair: MapPair, fix: FixationSet) -> tuple[np.ndarray, np.ndarray]:
    fix = require_fixations(fix)
    fix.check_bounds(pair.gsm.shape[1], pair.gsm.shape[0])
    return fix.points[:, 1], fix.points[:, 0]


def _roc_auc(pos_values: np.ndarray, neg_values: np.ndarray) -> float:
    """ROC area with thresholds at the distinct positive values (Judd style)."""
    n_pos = pos_values.size
    n_neg = neg_values.size
    thresholds = np.unique(pos_values)[::-1]
    tp = np.concatenate([[0.0], np.searchsorted(np.sort(-pos_values), -thresholds, side="right") / n_pos, [1.0]])
    fp = np.concatenate([[0.0], (n_neg - np.searchsorted(np.sort(neg_values), thresholds, side="left")) / n_neg, [1.0]])
    return float(np.trapezoid(tp, fp))


def auc_judd(pair: MapPair, fix: FixationSet) -> float:
    """AUC with positives at fixations and negatives at all other pixels."""
    ys, xs = _fix_indices(pair, fix)
    s = pair.esm
    mask = np.zeros(s.shape, dtype=bool)
    mask[ys, xs] = True
    pos = s[mask]
    neg = s[~mask]
    if neg.size == 0:
        return 1.0
    return _roc_auc(pos, neg)


def _shuffle_pool(pair: MapPair, fix: FixationSet, ctx: EvalContext) -> np.ndarray:
    """Other images' fixated locations, valid in this grid, minus positives."""
    h, w = pair.gsm.shape
    own = set(map(tuple, fix.points.tolist()))
    pool = []
    for image_id in sorted(ctx.dataset_fixations):
        other = ctx.dataset_fixations[image_id]
        if other.image_id == fix.image_id or image_id == fix.image_id:
            continue
        for x, y in other.points.tolist():
            if 0 <= x < w and 0 <= y < h and (x, y) not in own:
                pool.append((x, y))
    if not pool:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(np.array(pool, dtype=np.int64), axis=0)


def shuffled_auc(pair: MapPair, fix: FixationSet, ctx: EvalContext) -> float:
    """AUC with negatives sampled from other images' fixations (sAUC)."""
    fix = require_fixations(fix)
    ys, xs = _fix_indices(pair, fix)
    pool = _shuffle_pool(pair, fix, ctx)
    n = len(fix)
    if pool.shape[0] < n:
        raise InsufficientNegatives(
            f"shuffle pool has {pool.shape[0]} locations, need {n}"
        )
    rng = ctx.rng(1, _stable_id(fix.image_id))
    take = rng.choice(pool.shape[0], size=n, replace=False)
    neg = pool[take]
    return _roc_auc(pair.esm[ys, xs], pair.esm[neg[:, 1], neg[:, 0]])


def _dataset_density(ctx: EvalContext, width: int, height: int) -> np.ndarray:
    acc = np.full((height, width), 1e-9)
    for fix in ctx.dataset_fixations.values():
        pts = fix.points
        ok = (pts[:, 0] >= 0) & (pts[:, 0] < width) & (pts[:, 1] >= 0) & (pts[:, 1] < height)
        np.add.at(acc, (pts[ok, 1], pts[ok, 0]), 1.0)
    return acc


def _stable_id(s: str) -> int:
    h = 0
    for ch in s.encode("utf-8"):
        h = (h * 131 + ch) & 0x7FFFFFFF
    return h


def rauc_pos_neg(
    pair: MapPair, fix: FixationSet, ctx: EvalContext
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Positives and resampled negatives shared by rAUC and PRE.

    Negatives are drawn without replacement from the non-fixated pixels in
    the low-response region of G (bottom quantile), with probability
    proportional to the dataset-wide fixation density; the count matches the
    positives.
    """
    fix = require_fixations(fix)
    ys, xs = _fix_indices(pair, fix)
    g = pair.gsm
    h, w = g.shape
    cutoff = np.quantile(g, ctx.rauc_low_quantile)
    candidate = g <= cutoff
    candidate[ys, xs] = False
    cy, cx = np.nonzero(candidate)
    n = ys.size
    if cy.size < n:
        raise InsufficientNegatives(f"{cy.size} low-response pixels available, need {n}")
    density = _dataset_density(ctx, w, h)[cy, cx]
    rng = ctx.rng(2, _stable_id(fix.image_id))
    take = rng.choice(cy.size, size=n, replace=False, p=density / density.sum())
    return ys, xs, cy[take], cx[take]


def resampled_auc(pair: MapPair, fix: FixationSet, ctx: EvalContext) -> float:
    """AUC with negatives resampled from low ground-truth regions (rAUC)."""
    ys, xs, ny, nx = rauc_pos_neg(pair, fix, ctx)
    return _roc_auc(pair.esm[ys, xs], pair.esm[ny, nx])


def precision_energy(pair: MapPair, fix: FixationSet, ctx: EvalContext) -> float:
    """Fraction of saliency energy assigned to the rAUC positives (PRE)."""
    ys, xs, ny, nx = rauc_pos_neg(pair, fix, ctx)
    pos = float(pair.esm[ys, xs].sum())
    neg = float(pair.esm[ny, nx].sum())
    if pos + neg == 0:
        return 0.0
    return pos / (pos + neg)


def nss(pair: MapPair, fix: FixationSet) -> float:
    """Mean z-scored saliency at fixated pixels."""
    ys, xs = _fix_indices(pair, fix)
    s = pair.esm
    std = s.std()
    if std == 0:
        raise ZeroVariance("NSS needs a non-constant saliency map")
    return float(((s[ys, xs] - s.mean()) / std).mean())


def sim(pair: MapPair) -> float:
    """Histogram intersection of the two maps as distributions."""
    p = to_distribution(pair.esm)
    q = to_distribution(pair.gsm)
    return float(np.minimum(p, q).sum())


def cc(pair: MapPair) -> float:
    """Pearson correlation between the two maps over pixels."""
    a = pair.esm.ravel()
    b = pair.gsm.ravel()
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        raise ZeroVariance("CC needs two non-constant maps")
    return float(((a - a.mean()) * (b - b.mean())).mean() / (sa * sb))


def info_gain(pair: MapPair, fix: FixationSet, ctx: EvalContext) -> float:
    """Mean log2 probability gain over the baseline prior at fixations."""
    ys, xs = _fix_indices(pair, fix)
    if ctx.baseline is None:
        raise ValueError("EvalContext.baseline is required for IG")
    s = to_distribution(pair.esm)
    h, w = pair.gsm.shape
    base = to_distribution(resize_bilinear(as_map(ctx.baseline), w, h))
    gain = np.log2(s[ys, xs] + LOG_EPS) - np.log2(base[ys, xs] + LOG_EPS)
    return float(gain.mean())


def kld_sym(pair: MapPair) -> float:
    """Symmetric Kullback-Leibler divergence, base-2, epsilon-stabilized."""
    p = to_distribution(pair.esm)
    q = to_distribution(pair.gsm)
    lp = np.log2(p + LOG_EPS)
    lq = np.log2(q + LOG_EPS)
    return float((p * (lp - lq)).sum() + (q * (lq - lp)).sum())


def emd(pair: MapPair, grid_res: int = 32) -> float:
    """Exact earth mover's distance on a grid_res x grid_res downsampling.

    Cell spacing is 1 at the working resolution, so the score is in pixel
    units of that grid.
    """
    if grid_res > EMD_MAX_GRID:
        raise ResolutionTooLarge(f"grid_res {grid_res} exceeds exact-solver bound {EMD_MAX_GRID}")
    if grid_res < 1:
        raise ValueError("grid_res must be >= 1")
    p = to_distribution(np.maximum(resize_bilinear(pair.esm, grid_res, grid_res), 0.0))
    q = to_distribution(np.maximum(resize_bilinear(pair.gsm, grid_res, grid_res), 0.0))
    return grid_emd(p, q)


@dataclass(frozen=True)
class MetricResult:
    score: float | None
    error: str | None = None


def evaluate_all(pair: MapPair, fix: FixationSet, ctx: EvalContext) -> dict[MetricId, MetricResult]:
    """Score all ten metrics; per-metric failures are recorded, not raised."""
    runners: dict[MetricId, Callable[[], float]] = {
        MetricId.AUC: lambda: auc_judd(pair, fix),
        MetricId.SAUC: lambda: shuffled_auc(pair, fix, ctx),
        MetricId.RAUC: lambda: resampled_auc(pair, fix, ctx),
        MetricId.PRE: lambda: precision_energy(pair, fix, ctx),
        MetricId.NSS: lambda: nss(pair, fix),
        MetricId.SIM: lambda: sim(pair),
        MetricId.CC: lambda: cc(pair),
        MetricId.IG: lambda: info_gain(pair, fix, ctx),
        MetricId.KLD: lambda: kld_sym(pair),
        MetricId.EMD: lambda: emd(pair, ctx.emd_grid_res),
    }
    out: dict[MetricId, MetricResult] = {}
    for mid, run in runners.items():
        try:
            out[mid] = MetricResult(run())
        except (AllZeroMap, EmptyFixations, InsufficientNegatives, ZeroVariance, ResolutionTooLarge, ValueError) as e:
            out[mid] = MetricResult(None, f"{type(e).__name__}: {e}")
    return out
