"""eitbench: benchmark toolkit for the 2D continuum EIT inverse problem."""

__version__ = "0.1.0"
