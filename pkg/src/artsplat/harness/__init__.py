"""Metrics, procedural objects and end-to-end experiments."""
