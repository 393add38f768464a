"""Benchmark toolkit for compressed representations of voxel-wise expression data."""

__version__ = "0.1.0"
