"""
Normal-form runs only carry meta-solver weights and the metric per epoch.
Extensive-form runs also carry the best-response oracle parameters.
"""
from __future__ import annotations

import typing as t
from enum import Enum


class Field(str, Enum):
    alpha = "alpha"
    beta = "beta"
    k = "k"
    y = "y"


class Mode(str, Enum):
    nfg = "nfg"
    efg = "efg"

    def fields(self, num_solvers: int) -> t.List[t.Tuple[Field, int]]:
        """
        The per-epoch token layout as ``(field, slot)`` pairs, where ``slot``
        is the meta-solver index for alpha fields and 0 otherwise.
        """
        layout = [(Field.alpha, b) for b in range(num_solvers)]
        if self is Mode.efg:
            layout += [(Field.beta, 0), (Field.k, 0)]
        layout.append((Field.y, 0))
        return layout

    def tokens_per_epoch(self, num_solvers: int) -> int:
        return num_solvers + (3 if self is Mode.efg else 1)
