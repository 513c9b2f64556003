"""Description-length model of semantic degeneracy.

The bits needed to pin down an intended meaning grow as
``K = N * c_concept + C(N, 2) * c_relationship`` for ``N`` concepts, and the
chance of reconstructing every bit falls geometrically in ``K``: either
``(1 - p_e) ** K`` for a per-bit error rate or ``(1 / d) ** K`` for a mean
per-bit degeneracy ``d``, optionally divided by ``N!``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence


@dataclass(frozen=True)
class DegeneracyModel:
    n_concepts: int
    bits_per_concept: float = 5.0
    bits_per_relationship: float = 1.0
    error_per_bit: float | None = None
    mean_degeneracy_per_bit: float | None = None
    include_factorial: bool = False

    def __post_init__(self):
        if self.n_concepts < 1:
            raise ValueError("n_concepts must be at least 1")
        if self.bits_per_concept <= 0 or self.bits_per_relationship <= 0:
            raise ValueError("bit costs must be positive")
        if self.error_per_bit is not None and not 0 <= self.error_per_bit < 1:
            raise ValueError("error_per_bit must lie in [0, 1)")
        if self.mean_degeneracy_per_bit is not None and self.mean_degeneracy_per_bit < 1:
            raise ValueError("mean_degeneracy_per_bit must be at least 1")


def k_bits(model: DegeneracyModel) -> float:
    n = model.n_concepts
    return n * model.bits_per_concept + math.comb(n, 2) * model.bits_per_relationship


def log_p_perfect(model: DegeneracyModel) -> float:
    """Natural log of :func:`p_perfect`; stays finite where the probability underflows."""
    has_error = model.error_per_bit is not None
    has_degeneracy = model.mean_degeneracy_per_bit is not None
    if has_error == has_degeneracy:
        raise ValueError("set exactly one of error_per_bit and mean_degeneracy_per_bit")
    k = k_bits(model)
    if has_error:
        per_bit = math.log1p(-model.error_per_bit)
    else:
        per_bit = -math.log(model.mean_degeneracy_per_bit)
    prefactor = -math.lgamma(model.n_concepts + 1) if model.include_factorial else 0.0
    return prefactor + k * per_bit


def p_perfect(model: DegeneracyModel) -> float:
    return math.exp(log_p_perfect(model))


@dataclass
class SweepTable:
    n_values: list[int]
    k_values: list[float]
    error_values: list[float]
    # probabilities[i][j]: P for n_values[i] at error_values[j]
    probabilities: list[list[float]]

    def column(self, error: float) -> list[float]:
        j = self.error_values.index(error)
        return [row[j] for row in self.probabilities]

    def rows(self):
        for n, k, ps in zip(self.n_values, self.k_values, self.probabilities):
            yield [n, k, *ps]

    def header(self) -> list[str]:
        return ["N", "K"] + [f"p_e={e:g}" for e in self.error_values]

    def write(self, path: str | Path, delimiter: str = ",") -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter=delimiter)
            w.writerow(self.header())
            for row in self.rows():
                w.writerow([row[0], f"{row[1]:g}", *(repr(p) for p in row[2:])])


def sweep_curves(template: DegeneracyModel, n_range: Iterable[int], error_values: Sequence[float]) -> SweepTable:
    n_values = list(n_range)
    if not n_values:
        raise ValueError("n_range is empty")
    base = replace(template, mean_degeneracy_per_bit=None)
    ks, probs = [], []
    for n in n_values:
        model_n = replace(base, n_concepts=n)
        ks.append(k_bits(model_n))
        probs.append([p_perfect(replace(model_n, error_per_bit=e)) for e in error_values])
    return SweepTable(n_values, ks, list(error_values), probs)


DEFAULT_ERROR_RATES = (0.0, 0.01, 0.02, 0.05, 0.1)
