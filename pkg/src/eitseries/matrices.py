"""Measurement and derivative matrix containers plus their CSV round-trip.

Complex entries serialise as "re+imi" pairs at full round-trip precision so
written files reproduce bitwise on reload.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


def format_complex(z: complex) -> str:
    z = complex(z)
    sign = "+" if z.imag >= 0 or z.imag != z.imag else "-"
    return f"{z.real!r}{sign}{abs(z.imag)!r}i"


def parse_complex(s: str) -> complex:
    return complex(s.strip().replace("i", "j"))


@dataclass
class NDMatrix:
    """Square matrix of boundary measurements in a fixed basis.

    ``entries[i, j]`` is the i-th basis coefficient of the measured response
    to the j-th basis input.
    """

    entries: np.ndarray
    basis: object = None

    @property
    def J(self) -> int:
        return self.entries.shape[0]

    def vec(self) -> np.ndarray:
        """Column-stacked vector (first index fastest)."""
        return self.entries.reshape(-1, order="F")

    def save(self, path: str | Path) -> None:
        lines = [f"# ND J={self.J}"]
        for row in self.entries:
            lines.append(",".join(format_complex(z) for z in row))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "NDMatrix":
        lines = Path(path).read_text().splitlines()
        if not lines[0].startswith("# ND J="):
            raise ValueError(f"unrecognised header: {lines[0]!r}")
        j = int(lines[0].split("=")[1])
        entries = np.array([[parse_complex(z) for z in line.split(",")]
                            for line in lines[1:j + 1]])
        if np.all(entries.imag == 0.0):
            entries = entries.real
        return cls(entries)


@dataclass
class DerivativeMatrix:
    """Derivative of the measurement matrix with respect to pixel values.

    Column n holds the vectorised (first index fastest) response matrix of a
    unit perturbation of pixel n; shape (J*J, N).
    """

    entries: np.ndarray
    basis: object = None
    partition: object = None

    @property
    def J(self) -> int:
        return int(round(self.entries.shape[0] ** 0.5))

    @property
    def n_pixels(self) -> int:
        return self.entries.shape[1]

    def save(self, path: str | Path) -> None:
        lines = [f"# DL J={self.J} N={self.n_pixels}"]
        for row in self.entries:
            lines.append(",".join(format_complex(z) for z in row))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "DerivativeMatrix":
        lines = Path(path).read_text().splitlines()
        head = lines[0]
        if not head.startswith("# DL J="):
            raise ValueError(f"unrecognised header: {head!r}")
        parts = head.replace("# DL ", "").split()
        j = int(parts[0].split("=")[1])
        n = int(parts[1].split("=")[1])
        entries = np.array([[parse_complex(z) for z in line.split(",")]
                            for line in lines[1:j * j + 1]])
        if entries.shape != (j * j, n):
            raise ValueError(f"expected shape {(j * j, n)}, got {entries.shape}")
        if np.all(entries.imag == 0.0):
            entries = entries.real
        return cls(entries)
