"""salbench: saliency-map evaluation metrics, judgment analytics and the
learned perceptual metric, with a benchmark CLI and an annotation service."""

from . import cpj, errors, judgments, maps, metrics, synth

__version__ = "0.1.0"

__all__ = ["cpj", "errors", "judgments", "maps", "metrics", "synth", "__version__"]
