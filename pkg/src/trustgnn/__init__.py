"""Fraud detection on signed web-of-trust rating graphs."""

from .graph import EdgeRecord, IngestConfig, SignedGraph, load_edge_list

__all__ = ["EdgeRecord", "IngestConfig", "SignedGraph", "load_edge_list"]

__version__ = "0.1.0"
