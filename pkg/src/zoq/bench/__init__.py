"""Experiment bench: config parsing, sweep runner, CSV output, SVG plots."""
