"""2x2 quaternionic block algebra and phase bookkeeping for the spectral plane.

Non-hermitian resolvents are represented by matrices of the form

    [[a, i*b], [i*conj(b), conj(a)]]

which are closed under multiplication and inversion.  The compact (a, b)
representation carries the same information as the full 2x2 matrix and is what
the solvers iterate on; the full matrix form is used for residual checks and
for applying the one-sided phase rotations.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

from .errors import OriginError, SingularMatrixError

_DET_FLOOR = 1e-300


@dataclass(frozen=True)
class Complex2x2:
    """Dense 2x2 complex matrix with just the operations the solvers need."""

    q11: complex
    q12: complex
    q21: complex
    q22: complex

    def __matmul__(self, other: "Complex2x2") -> "Complex2x2":
        return Complex2x2(
            self.q11 * other.q11 + self.q12 * other.q21,
            self.q11 * other.q12 + self.q12 * other.q22,
            self.q21 * other.q11 + self.q22 * other.q21,
            self.q21 * other.q12 + self.q22 * other.q22,
        )

    def __add__(self, other: "Complex2x2") -> "Complex2x2":
        return Complex2x2(self.q11 + other.q11, self.q12 + other.q12,
                          self.q21 + other.q21, self.q22 + other.q22)

    def __sub__(self, other: "Complex2x2") -> "Complex2x2":
        return Complex2x2(self.q11 - other.q11, self.q12 - other.q12,
                          self.q21 - other.q21, self.q22 - other.q22)

    def scale(self, s: complex) -> "Complex2x2":
        return Complex2x2(s * self.q11, s * self.q12, s * self.q21, s * self.q22)

    @property
    def det(self) -> complex:
        return self.q11 * self.q22 - self.q12 * self.q21

    @property
    def trace(self) -> complex:
        return self.q11 + self.q22

    def norm_max(self) -> float:
        """Entrywise max-abs norm, used for residual reporting."""
        return max(abs(self.q11), abs(self.q12), abs(self.q21), abs(self.q22))

    @staticmethod
    def identity() -> "Complex2x2":
        return Complex2x2(1.0, 0.0, 0.0, 1.0)

    @staticmethod
    def diagonal(d1: complex, d2: complex) -> "Complex2x2":
        return Complex2x2(d1, 0.0, 0.0, d2)


def invert(m: Complex2x2) -> Complex2x2:
    """Inverse of a 2x2 matrix; raises SingularMatrixError when |det| underflows."""
    d = m.det
    if abs(d) <= _DET_FLOOR:
        raise SingularMatrixError(abs(d))
    return Complex2x2(m.q22 / d, -m.q12 / d, -m.q21 / d, m.q11 / d)


@dataclass(frozen=True)
class QuaternionicGreen:
    """Compact (a, b) form of the structured 2x2 resolvent block."""

    a: complex
    b: complex

    def embed(self) -> Complex2x2:
        return Complex2x2(self.a, 1j * self.b,
                          1j * self.b.conjugate(), self.a.conjugate())

    @staticmethod
    def extract(m: Complex2x2) -> "QuaternionicGreen":
        """Read (a, b) back off an embedded matrix.  Exact inverse of embed()."""
        return QuaternionicGreen(m.q11, -1j * m.q12)

    @property
    def det(self) -> float:
        # det of the embedded matrix; always real and >= 0 for this structure.
        return abs(self.a) ** 2 + abs(self.b) ** 2


def qmul(x: QuaternionicGreen, y: QuaternionicGreen) -> QuaternionicGreen:
    """Product of two structured matrices, staying in (a, b) form."""
    return QuaternionicGreen(
        x.a * y.a - x.b * y.b.conjugate(),
        x.a * y.b + x.b * y.a.conjugate(),
    )


def qinv(x: QuaternionicGreen) -> QuaternionicGreen:
    d = x.det
    if d <= _DET_FLOOR:
        raise SingularMatrixError(d)
    return QuaternionicGreen(x.a.conjugate() / d, -x.b / d)


@dataclass(frozen=True)
class PhasePoint:
    """A nonzero spectral point together with its principal phase data.

    w is the principal square root of z, phi = Arg z in (-pi, pi], and
    psi = phi / 2 is the rotation angle entering the one-sided phase maps.
    """

    z: complex
    w: complex
    phi: float
    psi: float


def phase_split(z: complex) -> PhasePoint:
    if z == 0:
        raise OriginError()
    w = cmath.sqrt(z)  # principal branch: Re w >= 0, cut on the negative axis
    phi = cmath.phase(z)
    return PhasePoint(z=z, w=w, phi=phi, psi=0.5 * phi)


@dataclass(frozen=True)
class URotation:
    """Conjugation by u(psi) = diag(e^{i psi/2}, e^{-i psi/2}), from either side."""

    psi: float

    def left(self, m: Complex2x2) -> Complex2x2:
        return rotate_left(m, self.psi)

    def right(self, m: Complex2x2) -> Complex2x2:
        return rotate_right(m, self.psi)


def rotate_left(m: Complex2x2, psi: float) -> Complex2x2:
    """[X]^L: multiply q12 by e^{i psi} and q21 by e^{-i psi}; diagonal untouched."""
    u = cmath.exp(1j * psi)
    return Complex2x2(m.q11, u * m.q12, m.q21 / u, m.q22)


def rotate_right(m: Complex2x2, psi: float) -> Complex2x2:
    """[X]^R: multiply q12 by e^{-i psi} and q21 by e^{i psi}; diagonal untouched."""
    u = cmath.exp(1j * psi)
    return Complex2x2(m.q11, m.q12 / u, u * m.q21, m.q22)
