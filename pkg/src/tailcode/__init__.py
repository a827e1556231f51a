"""Tail redundancy of distribution families over the positive integers, and
compressors whose per-symbol redundancy tracks it."""

__version__ = "0.1.0"

from .errors import TailcodeError
from .families import Family, parse_family_spec
from .harness import convergence_experiment, exhaustive_redundancy, measure_redundancy
from .minimax import (
    bayes_redundancy,
    minimax_redundancy,
    tail_minimax,
    tail_minimax_tilde,
    tail_redundancy_curve,
)
from .pmf import Pmf, kl_divergence, make_pmf, tail_kl

__all__ = [
    "Family",
    "Pmf",
    "TailcodeError",
    "bayes_redundancy",
    "convergence_experiment",
    "exhaustive_redundancy",
    "kl_divergence",
    "make_pmf",
    "measure_redundancy",
    "minimax_redundancy",
    "parse_family_spec",
    "tail_kl",
    "tail_minimax",
    "tail_minimax_tilde",
    "tail_redundancy_curve",
]
