"""Typed errors shared across the toolkit."""


class SalbenchError(Exception):
    """Base class for all toolkit errors."""


class MalformedFile(SalbenchError):
    """A map, fixation or dataset file could not be parsed."""


class DimensionMismatch(SalbenchError):
    """Two grids (or a grid and its sidecar) disagree on dimensions."""


class OutOfBounds(SalbenchError):
    """A fixation point lies outside the associated image bounds."""


class AllZeroMap(SalbenchError):
    """A map with zero total mass cannot be turned into a distribution."""


class EmptyFixations(SalbenchError):
    """A metric that needs positives received no fixations."""


class InsufficientNegatives(SalbenchError):
    """The negative-sampling pool is smaller than the requested count."""


class ZeroVariance(SalbenchError):
    """A constant map has no variance to normalize or correlate."""


class ResolutionTooLarge(SalbenchError):
    """Requested transport grid exceeds the exact-solver bound."""


class NoAnswers(SalbenchError):
    """A judgment record without answers has no derived scores."""


class EmptyDataset(SalbenchError):
    """An analytics operation received a dataset with no records."""


class GroupTooLarge(SalbenchError):
    """Two disjoint subgroups of the requested size do not fit the subject pool."""


class MissingScores(SalbenchError):
    """A record side has no metric score attached."""


class ZeroTotalConfidence(SalbenchError):
    """Every record has confidence zero; accuracy is undefined."""


class ModelSetMismatch(SalbenchError):
    """Two rankings cover different model sets."""


class EmptyScores(SalbenchError):
    """No per-image scores were supplied for ranking."""


class EmptyInput(SalbenchError):
    """An aggregate operation received an empty collection."""


class InvalidConfig(SalbenchError):
    """A network configuration violates a structural constraint."""


class Diverged(SalbenchError):
    """Training produced a non-finite loss."""
