"""
cropsim/dataset/models/__init__.py
Dataset record models
"""
from .conditions import ConditionSet, SamplePair
from .ground_truth import GroundTruthRow
from .sequence import SPLITS, ManifestRow, SequenceRecord
from .treatment import Treatment, default_vocabulary, find_changed

__all__ = [
    "ConditionSet",
    "SamplePair",
    "GroundTruthRow",
    "ManifestRow",
    "SequenceRecord",
    "SPLITS",
    "Treatment",
    "default_vocabulary",
    "find_changed",
]
