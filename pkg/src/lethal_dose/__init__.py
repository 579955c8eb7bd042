"""Desk-scale experiments on the lethal dose of data poisoning.

Synthetic tasks with known optimal learners, Deep Partition Aggregation with
its pointwise certificate, the matching optimal poisoning constructions, and
total-variation couplings, tied together by a Monte Carlo harness.
"""

__version__ = "0.1.0"
