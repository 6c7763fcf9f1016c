"""Crowdsourced pairwise-judgment data model and its three analyses.

A record holds one question: two estimated maps (A, B) compared against a
ground truth G by several subjects. Derived per-record scores:

    l = fraction of subjects choosing A
    c = 2*|l - 0.5|   (confidence that one side clearly wins)
    r = 2*l - 1       (relative saliency score, the regression target)
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    EmptyDataset,
    EmptyScores,
    GroupTooLarge,
    MissingScores,
    ModelSetMismatch,
    NoAnswers,
    ZeroTotalConfidence,
)
from .metrics import MetricId, Polarity

EXACT_PAIR_LIMIT = 100_000
SAMPLED_PAIRS = 10_000


@dataclass(frozen=True)
class Answer:
    subject: str
    chose_a: bool
    elapsed_ms: int = 0


@dataclass(frozen=True)
class JudgmentRecord:
    question_id: int
    image_id: str
    esm_a_id: str
    esm_b_id: str
    gsm_id: str
    answers: tuple[Answer, ...]

    def __post_init__(self):
        subjects = [a.subject for a in self.answers]
        if len(subjects) != len(set(subjects)):
            raise ValueError(f"question {self.question_id}: a subject answered twice")

    def swapped(self) -> "JudgmentRecord":
        """The same question with sides exchanged and answers negated."""
        return JudgmentRecord(
            self.question_id,
            self.image_id,
            self.esm_b_id,
            self.esm_a_id,
            self.gsm_id,
            tuple(Answer(a.subject, not a.chose_a, a.elapsed_ms) for a in self.answers),
        )


def derive_scores(record: JudgmentRecord) -> tuple[float, float, float]:
    """Per-record (l, c, r) from the binary answers."""
    n = len(record.answers)
    if n == 0:
        raise NoAnswers(f"question {record.question_id} has no answers")
    l = sum(a.chose_a for a in record.answers) / n
    return l, 2.0 * abs(l - 0.5), 2.0 * l - 1.0


@dataclass(frozen=True)
class JudgmentDataset:
    records: tuple[JudgmentRecord, ...]

    def __post_init__(self):
        ids = [r.question_id for r in self.records]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate question ids in dataset")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def subjects(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for r in self.records:
            for a in r.answers:
                seen.setdefault(a.subject, None)
        return tuple(sorted(seen))

    def model_ids(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for r in self.records:
            seen.setdefault(r.esm_a_id, None)
            seen.setdefault(r.esm_b_id, None)
        return tuple(sorted(seen))


def _require_nonempty(dataset: JudgmentDataset) -> None:
    if len(dataset) == 0:
        raise EmptyDataset("no judgment records")


# ---------------------------------------------------------------------------
# JSON-lines interchange format.
# ---------------------------------------------------------------------------


def record_to_json(record: JudgmentRecord) -> str:
    return json.dumps(
        {
            "q": record.question_id,
            "image": record.image_id,
            "a": record.esm_a_id,
            "b": record.esm_b_id,
            "g": record.gsm_id,
            "answers": [
                {"subject": a.subject, "chose_a": a.chose_a, "elapsed_ms": a.elapsed_ms}
                for a in record.answers
            ],
        },
        sort_keys=True,
    )


def save_dataset(dataset: JudgmentDataset, path) -> None:
    with open(path, "w") as f:
        for record in dataset.records:
            f.write(record_to_json(record) + "\n")


def load_dataset(path) -> JudgmentDataset:
    records = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        records.append(
            JudgmentRecord(
                int(obj["q"]),
                obj["image"],
                obj["a"],
                obj["b"],
                obj["g"],
                tuple(
                    Answer(a["subject"], bool(a["chose_a"]), int(a.get("elapsed_ms", 0)))
                    for a in obj["answers"]
                ),
            )
        )
    return JudgmentDataset(tuple(records))


# ---------------------------------------------------------------------------
# Confidence statistics.
# ---------------------------------------------------------------------------


def confidence_histogram(dataset: JudgmentDataset, bins: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Histogram (counts, edges) of the per-question confidence scores."""
    _require_nonempty(dataset)
    c = np.array([derive_scores(r)[1] for r in dataset.records])
    return np.histogram(c, bins=bins, range=(0.0, 1.0))


def consistent_fraction(dataset: JudgmentDataset, tau: float = 0.25) -> float:
    """Fraction of questions with confidence >= tau (consistent annotations)."""
    _require_nonempty(dataset)
    c = np.array([derive_scores(r)[1] for r in dataset.records])
    return float((c >= tau).mean())


# ---------------------------------------------------------------------------
# Inter-subject agreement.
# ---------------------------------------------------------------------------


def _answer_matrix(dataset: JudgmentDataset) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """(choices, known) matrices of shape (subjects, questions)."""
    subjects = list(dataset.subjects)
    index = {s: i for i, s in enumerate(subjects)}
    choices = np.zeros((len(subjects), len(dataset)), dtype=np.float64)
    known = np.zeros_like(choices, dtype=bool)
    for k, record in enumerate(dataset.records):
        for a in record.answers:
            i = index[a.subject]
            choices[i, k] = 1.0 if a.chose_a else 0.0
            known[i, k] = True
    return choices, known, subjects


def _subgroup_l(choices: np.ndarray, known: np.ndarray, members: Sequence[int]) -> np.ndarray:
    """Per-question fraction of the subgroup choosing A (answered members only)."""
    sel = list(members)
    counts = known[sel].sum(axis=0)
    with np.errstate(invalid="ignore"):
        l = choices[sel].sum(axis=0) / counts
    return np.where(counts > 0, l, 0.5)


def disjoint_pair_count(n_subjects: int, t: int) -> int:
    return math.comb(n_subjects, t) * math.comb(n_subjects - t, t) // 2


def inter_subject_agreement(
    dataset: JudgmentDataset,
    t: int,
    mode: str = "auto",
    n_samples: int = SAMPLED_PAIRS,
    seed: int = 0,
) -> float:
    """Agreement between disjoint subject subgroups of size t.

    One minus the mean (over disjoint subgroup pairs, over questions) absolute
    gap between the two subgroups' A-fractions. mode "exact" enumerates every
    unordered disjoint pair; "sampled" averages n_samples seeded draws; "auto"
    picks exact when the pair count is at most EXACT_PAIR_LIMIT.
    """
    _require_nonempty(dataset)
    choices, known, subjects = _answer_matrix(dataset)
    n = len(subjects)
    if t < 1 or 2 * t > n:
        raise GroupTooLarge(f"two disjoint groups of {t} do not fit {n} subjects")
    if mode == "auto":
        mode = "exact" if disjoint_pair_count(n, t) <= EXACT_PAIR_LIMIT else "sampled"

    if mode == "exact":
        subsets = list(itertools.combinations(range(n), t))
        masks = np.array([sum(1 << i for i in s) for s in subsets], dtype=np.int64)
        l_mat = np.stack([_subgroup_l(choices, known, s) for s in subsets])
        gap_sum = 0.0
        pairs = 0
        for i in range(len(subsets)):
            disjoint = (masks[i + 1 :] & masks[i]) == 0
            if disjoint.any():
                gap_sum += float(np.abs(l_mat[i + 1 :][disjoint] - l_mat[i]).mean(axis=1).sum())
                pairs += int(disjoint.sum())
        return 1.0 - gap_sum / pairs

    if mode == "sampled":
        rng = np.random.default_rng(seed)
        total = 0.0
        for _ in range(n_samples):
            perm = rng.permutation(n)
            u1, u2 = perm[:t], perm[t : 2 * t]
            total += np.abs(_subgroup_l(choices, known, u1) - _subgroup_l(choices, known, u2)).mean()
        return 1.0 - total / n_samples

    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# Metric prediction accuracy (confidence-weighted sign agreement).
# ---------------------------------------------------------------------------


def metric_accuracy(
    metric: MetricId | Polarity,
    scores: Mapping[tuple[int, str], float],
    dataset: JudgmentDataset,
    tie_credit: float = 0.0,
) -> float:
    """Confidence-weighted accuracy of a metric against the human ordering.

    scores maps (question_id, "a"|"b") to the metric value of that side. A
    record counts as correct when the sign of the score difference (under the
    metric's polarity) matches the sign of l - 0.5; score ties earn
    tie_credit. Zero-confidence records carry no weight.
    """
    _require_nonempty(dataset)
    polarity = metric.polarity if isinstance(metric, MetricId) else metric
    total_c = 0.0
    total = 0.0
    for record in dataset.records:
        l, c, _ = derive_scores(record)
        total_c += c
        if c == 0.0:
            continue
        try:
            sa = scores[(record.question_id, "a")]
            sb = scores[(record.question_id, "b")]
        except KeyError as e:
            raise MissingScores(f"no score for question {record.question_id} side {e}") from e
        if sa is None or sb is None:
            raise MissingScores(f"question {record.question_id} has a null score")
        diff = sa - sb
        if polarity is Polarity.LOWER_BETTER:
            diff = -diff
        if diff == 0.0:
            total += tie_credit * c
        elif (diff > 0.0) == (l > 0.5):
            total += c
    if total_c == 0.0:
        raise ZeroTotalConfidence("every record has confidence 0")
    return total / total_c


# ---------------------------------------------------------------------------
# Model-level rankings.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelRanking:
    """Models ordered best-first with their aggregate scores."""

    entries: tuple[tuple[str, float], ...]
    uncompared: tuple[tuple[str, str], ...] = ()

    @property
    def order(self) -> tuple[str, ...]:
        return tuple(m for m, _ in self.entries)


def rank_models(
    per_image_scores: Mapping[str, Mapping[str, float]],
    metric: MetricId | Polarity,
) -> ModelRanking:
    """Order models by mean per-image score under the metric's polarity.

    Models missing some images are averaged over what they have. Ties break
    lexicographically by model id.
    """
    if not per_image_scores:
        raise EmptyScores("no models to rank")
    polarity = metric.polarity if isinstance(metric, MetricId) else metric
    means = {}
    for model, by_image in per_image_scores.items():
        vals = [v for v in by_image.values() if v is not None]
        if not vals:
            raise EmptyScores(f"model {model!r} has no scores")
        means[model] = float(np.mean(vals))
    sign = -1.0 if polarity is Polarity.HIGHER_BETTER else 1.0
    ordered = sorted(means.items(), key=lambda kv: (sign * kv[1], kv[0]))
    return ModelRanking(tuple(ordered))


def inconsistent_pairs(ranking: ModelRanking, reference: ModelRanking) -> int:
    """Number of unordered model pairs ranked in opposite relative order."""
    a = ranking.order
    b = reference.order
    if set(a) != set(b):
        raise ModelSetMismatch(f"model sets differ: {sorted(a)} vs {sorted(b)}")
    pos = {m: i for i, m in enumerate(b)}
    count = 0
    for m1, m2 in itertools.combinations(a, 2):
        if pos[m1] > pos[m2]:
            count += 1
    return count


def human_reference_ranking(dataset: JudgmentDataset) -> ModelRanking:
    """Models ordered by total confidence-weighted pairwise wins.

    Each record credits its majority side with that record's confidence.
    Model pairs that never meet are flagged in the result.
    """
    _require_nonempty(dataset)
    models = dataset.model_ids()
    wins = {m: 0.0 for m in models}
    met: set[frozenset[str]] = set()
    for record in dataset.records:
        l, c, _ = derive_scores(record)
        met.add(frozenset((record.esm_a_id, record.esm_b_id)))
        if c == 0.0:
            continue
        winner = record.esm_a_id if l > 0.5 else record.esm_b_id
        wins[winner] += c
    ordered = sorted(wins.items(), key=lambda kv: (-kv[1], kv[0]))
    uncompared = tuple(
        sorted(
            (m1, m2)
            for m1, m2 in itertools.combinations(models, 2)
            if frozenset((m1, m2)) not in met
        )
    )
    return ModelRanking(tuple(ordered), uncompared)
