"""Biologically-primed MSI/MSS classification toolkit.

Splits the MSI class into genomically-defined sub-classes before training
softmax patch heads, aggregates patch probabilities to patient scores,
fuses two primed models, and evaluates everything with stratified
cross-validation and paired statistics. A seeded synthetic cohort
generator makes the whole pipeline verifiable at desk scale.
"""

__version__ = "0.1.0"
