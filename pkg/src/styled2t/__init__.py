"""Stylized data-to-text generation on attribute-value pairs.

A desk-scale, fully testable implementation of a stylized data-to-text
model: corpus-statistics logic graphs with GCN refinement, a GRU content
planner, transformer encoders/decoder at double precision, mask-based
style embedding from a reference text, and confidence-gated pseudo-triplet
augmentation for unbiased style control.
"""

__version__ = "0.1.0"
