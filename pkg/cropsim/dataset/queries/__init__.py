"""
cropsim/dataset/queries/__init__.py
Manifest and sidecar readers/writers
"""
from .ground_truth_queries import GroundTruthQueries
from .manifest_queries import ManifestError, ManifestQueries

__all__ = ["GroundTruthQueries", "ManifestError", "ManifestQueries"]
