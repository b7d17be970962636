"""Pure qudit states, Haar sampling and fidelity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NORM_TOL = 1e-9


class StateError(ValueError):
    pass


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator from an integer seed or a ``SeedSequence``.

    PCG64 with ``SeedSequence`` seeding is specified by numpy and produces the
    same stream on every platform.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True, eq=False)
class QuditState:
    """Normalized amplitudes ``c_k`` of ``sum_k c_k |k>``."""

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.complex128).reshape(-1)
        if c.size < 2:
            raise StateError(f"dimension must be >= 2, got {c.size}")
        if not np.all(np.isfinite(c)):
            raise StateError("state coefficients must be finite")
        norm2 = float(np.sum(np.abs(c) ** 2))
        if abs(norm2 - 1.0) > NORM_TOL:
            raise StateError(f"state is not normalized: sum |c_k|^2 = {norm2!r}")
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)

    @property
    def d(self) -> int:
        return self.coefficients.size

    def canonical(self) -> QuditState:
        """Same ray with ``c_0`` rotated onto the non-negative real axis."""
        c = self.coefficients * np.exp(-1j * np.angle(self.coefficients[0]))
        # the rotation leaves ~1e-17 of imaginary residue on c_0
        c[0] = abs(self.coefficients[0])
        return QuditState(c)

    def to_json(self) -> dict:
        return {"d": self.d, "coefficients": [[float(z.real), float(z.imag)] for z in self.coefficients]}

    @classmethod
    def from_json(cls, data: dict) -> QuditState:
        pairs = data["coefficients"]
        coeffs = np.array([complex(re, im) for re, im in pairs])
        if "d" in data and int(data["d"]) != coeffs.size:
            raise StateError(f"'d' = {data['d']} but {coeffs.size} coefficients given")
        return cls(coeffs)


def normalize(coefficients) -> QuditState:
    c = np.asarray(coefficients, dtype=np.complex128).reshape(-1)
    norm = np.sqrt(np.sum(np.abs(c) ** 2))
    if not norm > 0:
        raise StateError("cannot normalize the zero vector")
    return QuditState(c / norm)


def basis_state(d: int, k: int) -> QuditState:
    c = np.zeros(d, dtype=np.complex128)
    c[k] = 1.0
    return QuditState(c)


def haar_random(d: int, rng_seed) -> QuditState:
    """Haar-distributed pure state: normalized vector of i.i.d. standard complex Gaussians."""
    if d < 2:
        raise StateError(f"dimension must be >= 2, got {d}")
    rng = make_rng(rng_seed)
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return normalize(z)


def uniform_amplitude_random(d: int, rng_seed) -> QuditState:
    """``|c_k|^2 = 1/d`` with i.i.d. uniform phases."""
    if d < 2:
        raise StateError(f"dimension must be >= 2, got {d}")
    rng = make_rng(rng_seed)
    return QuditState(np.exp(1j * rng.uniform(-np.pi, np.pi, d)) / np.sqrt(d))


def fidelity(a: QuditState, b: QuditState) -> float:
    """``|<a|b>|`` for pure states; invariant under global phases of either argument."""
    if a.d != b.d:
        raise StateError(f"dimension mismatch: {a.d} vs {b.d}")
    return float(min(1.0, abs(np.vdot(a.coefficients, b.coefficients))))
