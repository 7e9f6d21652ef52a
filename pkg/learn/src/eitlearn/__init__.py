"""eitlearn: toy-scale learned post-processing for eitbench datasets."""

__version__ = "0.1.0"
