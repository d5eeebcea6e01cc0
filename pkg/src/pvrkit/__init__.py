"""Pointer value retrieval: task generation, shift splits, noise sensitivity and a reference trainer."""

from pvrkit.core import AggregationKind, TaskSpec, aggregate, block_position_of, label_of, window_slots

__all__ = ["AggregationKind", "TaskSpec", "aggregate", "block_position_of", "label_of", "window_slots"]
__version__ = "0.1.0"
