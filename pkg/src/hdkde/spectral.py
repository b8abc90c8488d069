"""Eigenvalue distributions of the data covariance."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .errors import DomainError

WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SpectralDensity:
    """Discrete eigenvalue law: atoms ``(eigenvalue, weight)``.

    A continuous law is represented by the caller's quadrature rule:
    nodes become eigenvalues and quadrature weights become atom weights.
    """

    eigenvalues: np.ndarray
    weights: np.ndarray
    label: str = field(default="", compare=False)

    def __post_init__(self):
        lam = np.array(self.eigenvalues, dtype=float).reshape(-1)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if lam.size == 0 or lam.shape != w.shape:
            raise DomainError("eigenvalues and weights must be non-empty and of equal length")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0.0):
            raise DomainError("eigenvalues must be finite and strictly positive")
        if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
            raise DomainError("weights must be finite and strictly positive")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise DomainError(f"weights must sum to 1 (got {w.sum()!r})")
        lam.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "weights", w)

    @classmethod
    def identity(cls) -> "SpectralDensity":
        return cls(np.array([1.0]), np.array([1.0]), label="identity")

    @classmethod
    def from_atoms(cls, atoms: Iterable[tuple[float, float]], label: str = "") -> "SpectralDensity":
        pairs = list(atoms)
        return cls(np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]), label=label)

    @classmethod
    def load(cls, path) -> "SpectralDensity":
        """Read one ``eigenvalue weight`` pair per line; ``#`` starts a comment."""
        path = Path(path)
        pairs = []
        for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise DomainError(f"{path}:{lineno}: expected 'eigenvalue weight', got {raw!r}")
            try:
                pairs.append((float(parts[0]), float(parts[1])))
            except ValueError as exc:
                raise DomainError(f"{path}:{lineno}: {exc}") from None
        if not pairs:
            raise DomainError(f"{path}: no atoms found")
        return cls.from_atoms(pairs, label=str(path))

    def dump(self, path) -> None:
        lines = [f"{float(lam)!r} {float(w)!r}" for lam, w in zip(self.eigenvalues, self.weights)]
        Path(path).write_text("\n".join(lines) + "\n")

    def average(self, func: Callable[[np.ndarray], np.ndarray]) -> float:
        """Spectral average ``sum_i w_i func(lambda_i)``."""
        return float(np.dot(self.weights, func(self.eigenvalues)))

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.eigenvalues))

    @property
    def mean_log(self) -> float:
        return float(np.dot(self.weights, np.log(self.eigenvalues)))

    @property
    def max(self) -> float:
        return float(self.eigenvalues.max())

    def as_atoms(self) -> list[tuple[float, float]]:
        return [(float(a), float(b)) for a, b in zip(self.eigenvalues, self.weights)]

    def __eq__(self, other):
        if not isinstance(other, SpectralDensity):
            return NotImplemented
        return (np.array_equal(self.eigenvalues, other.eigenvalues)
                and np.array_equal(self.weights, other.weights))

    def __hash__(self):
        return hash((self.eigenvalues.tobytes(), self.weights.tobytes()))

    def __repr__(self):
        name = f"{self.label!r}, " if self.label else ""
        return f"SpectralDensity({name}atoms={self.as_atoms()})"
