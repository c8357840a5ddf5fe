"""Reference fields with known Helmholtz verdicts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Hamiltonian, VectorField

__all__ = ["CatalogEntry", "CATALOG", "catalog", "get"]


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    xq: tuple
    xp: tuple
    hamiltonian: bool
    H: str | None = None  # closed form, for Hamiltonian entries

    @property
    def d(self) -> int:
        return len(self.xq)

    def field(self) -> VectorField:
        return VectorField.from_expressions(list(self.xq), list(self.xp), self.name)

    def exact_hamiltonian(self) -> Hamiltonian | None:
        return None if self.H is None else Hamiltonian.from_expression(self.H, self.d, self.name)

    def exact_value(self, q, p) -> np.ndarray:
        if self.H is None:
            raise ValueError(f"{self.name} has no Hamiltonian")
        return self.exact_hamiltonian().value(q, p)


CATALOG = (
    CatalogEntry("harmonic", ("p1",), ("-q1",), True, "(q1^2 + p1^2)/2"),
    CatalogEntry("pendulum", ("p1",), ("-sin(q1)",), True, "p1^2/2 + 1 - cos(q1)"),
    CatalogEntry(
        "coupled",
        ("p1", "p2"),
        ("-q1 - q2", "-q2 - q1"),
        True,
        "(q1^2 + q2^2 + p1^2 + p2^2)/2 + q1*q2",
    ),
    CatalogEntry("damped", ("p1",), ("-q1 - 0.1*p1",), False),
    CatalogEntry("shear", ("p2", "0"), ("0", "0"), False),
    CatalogEntry("rotation-plus-source", ("p1 + 0.2*q1",), ("-q1 + 0.2*p1",), False),
)


def catalog() -> tuple[CatalogEntry, ...]:
    return CATALOG


def get(name: str) -> CatalogEntry:
    for e in CATALOG:
        if e.name == name:
            return e
    raise KeyError(f"no catalog field named {name!r}; known: {', '.join(e.name for e in CATALOG)}")
