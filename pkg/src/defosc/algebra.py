"""Deformed oscillator algebra on a truncated number basis.

A deformation is described by a function ``f(n)`` of the number operator,
with structure function ``F(n) = n f(n)**2``.  The q-deformed case uses the
q-bracket ``[n] = sinh(n tau) / sinh(tau)`` with ``tau = |ln q|``.

Units are hbar = m = k = 1; energies are returned in the same units as
``omega``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "DeformationSpec",
    "ModeParams",
    "SpectrumTable",
    "q_bracket",
    "structure_value",
    "structure_values",
    "deformation_factor",
    "energy_level",
    "energy_levels",
    "omega_shift",
    "omega_shifts",
    "spectrum",
    "ladder_elements",
]

KINDS = ("identity", "q_deformed", "custom")

# above this n*tau the sinh ratio is evaluated in log form
_LOG_SWITCH = 30.0


@dataclass(frozen=True)
class DeformationSpec:
    """Which deformation function governs the algebra.

    Use the constructors :meth:`identity`, :meth:`q_deformed`, :meth:`from_q`
    and :meth:`custom` rather than the raw initializer.  For ``custom`` the
    table holds ``f(1), f(2), ..., f(n_max)``.
    """

    kind: str = "identity"
    tau: float | None = None
    table: tuple[float, ...] | None = field(default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown deformation kind {self.kind!r}")
        if self.kind == "q_deformed":
            if self.tau is None or not math.isfinite(self.tau) or self.tau < 0:
                raise ValueError("q_deformed needs a finite tau >= 0")
        elif self.tau is not None:
            raise ValueError(f"tau is only valid for q_deformed, not {self.kind}")
        if self.kind == "custom":
            if self.table is None or len(self.table) == 0:
                raise ValueError("custom deformation needs a non-empty table")
            tab = tuple(float(x) for x in self.table)
            if not all(math.isfinite(x) and x >= 0 for x in tab):
                raise ValueError("custom table entries must be finite and >= 0")
            object.__setattr__(self, "table", tab)
        elif self.table is not None:
            raise ValueError(f"table is only valid for custom, not {self.kind}")

    @classmethod
    def identity(cls) -> "DeformationSpec":
        return cls("identity")

    @classmethod
    def q_deformed(cls, tau: float) -> "DeformationSpec":
        return cls("q_deformed", tau=float(tau))

    @classmethod
    def from_q(cls, q: float) -> "DeformationSpec":
        """q-deformation from the raw parameter; q and 1/q are equivalent."""
        if not q > 0:
            raise ValueError("q must be positive")
        return cls.q_deformed(abs(math.log(q)))

    @classmethod
    def custom(cls, table: Sequence[float]) -> "DeformationSpec":
        return cls("custom", table=tuple(table))

    @property
    def max_level(self) -> float:
        """Largest n for which F(n) is available."""
        if self.kind == "custom":
            return len(self.table)
        return math.inf


@dataclass(frozen=True)
class ModeParams:
    omega: float = 1.0
    dim: int = 32

    def __post_init__(self):
        if not (math.isfinite(self.omega) and self.omega > 0):
            raise ValueError("omega must be finite and positive")
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError("dim must be an integer >= 2")
        object.__setattr__(self, "dim", int(self.dim))


@dataclass(frozen=True)
class SpectrumTable:
    energies: np.ndarray
    omega_shift: np.ndarray
    structure: np.ndarray


def q_bracket(n, tau: float):
    """``[n] = sinh(n tau)/sinh(tau)``, elementwise in ``n``; equals ``n`` at tau=0."""
    n = np.asarray(n, dtype=float)
    tau = abs(float(tau))
    if tau == 0.0:
        return n.copy() if n.ndim else float(n)
    x = n * tau
    with np.errstate(over="ignore"):
        small = np.sinh(np.minimum(x, _LOG_SWITCH)) / math.sinh(tau)
        # [n] = exp((n-1) tau) (1 - e^{-2 n tau}) / (1 - e^{-2 tau})
        log_big = (
            x - tau
            + np.log(-np.expm1(-2.0 * np.maximum(x, _LOG_SWITCH)))
            - math.log(-math.expm1(-2.0 * tau))
        )
        big = np.exp(log_big)
    out = np.where(x > _LOG_SWITCH, big, small)
    return out if out.ndim else float(out)


def _check_levels(spec: DeformationSpec, n) -> np.ndarray:
    n = np.asarray(n)
    if n.size and (np.any(n < 0) or np.any(n != np.floor(n))):
        raise ValueError("level index must be a nonnegative integer")
    if n.size and np.max(n) > spec.max_level:
        raise IndexError(
            f"level {int(np.max(n))} beyond custom table range (n_max={len(spec.table)})"
        )
    return n.astype(int)


def structure_values(spec: DeformationSpec, n) -> np.ndarray:
    """Vectorized structure function ``F(n) = n f(n)^2``."""
    n = _check_levels(spec, n)
    if spec.kind == "identity":
        return n.astype(float)
    if spec.kind == "q_deformed":
        return np.asarray(q_bracket(n, spec.tau), dtype=float)
    f = np.concatenate([[0.0], np.asarray(spec.table)])
    return n * f[n] ** 2


def structure_value(spec: DeformationSpec, n: int) -> float:
    """Structure function F(n); F(0) = 0 for every kind."""
    return float(structure_values(spec, n))


def deformation_factor(spec: DeformationSpec, n: int) -> float:
    """f(n) = sqrt(F(n)/n) for n >= 1.

    f(0) never enters a matrix element and is deliberately not defined.
    """
    if n < 1:
        raise ValueError("deformation factor is only defined for n >= 1")
    if spec.kind == "custom":
        _check_levels(spec, n)
        return spec.table[n - 1]
    return math.sqrt(structure_value(spec, n) / n)


def energy_levels(spec: DeformationSpec, mode: ModeParams, n=None) -> np.ndarray:
    """E_n = (omega/2) [F(n+1) + F(n)]; defaults to n = 0..dim-1."""
    if n is None:
        n = np.arange(mode.dim)
    n = np.asarray(n)
    if n.size and np.max(n) > mode.dim - 1:
        raise IndexError("energy level beyond truncation dimension")
    return 0.5 * mode.omega * (structure_values(spec, n + 1) + structure_values(spec, n))


def energy_level(spec: DeformationSpec, mode: ModeParams, n: int) -> float:
    return float(energy_levels(spec, mode, n))


def omega_shifts(spec: DeformationSpec, n) -> np.ndarray:
    """Omega(n) = [F(n+2) - F(n)] / 2, the level spacing in units of omega."""
    n = np.asarray(n)
    return 0.5 * (structure_values(spec, n + 2) - structure_values(spec, n))


def omega_shift(spec: DeformationSpec, n: int) -> float:
    return float(omega_shifts(spec, n))


def spectrum(spec: DeformationSpec, mode: ModeParams) -> SpectrumTable:
    """Energies, frequency shifts and structure values for the whole basis.

    ``omega_shift`` covers n = 0..dim-1 when the deformation allows it; custom
    tables that stop at F(dim) yield Omega only up to dim-2.
    """
    n = np.arange(mode.dim)
    top = int(min(mode.dim - 1, spec.max_level - 2))
    return SpectrumTable(
        energies=energy_levels(spec, mode, n),
        omega_shift=omega_shifts(spec, np.arange(top + 1)),
        structure=structure_values(spec, np.arange(mode.dim + 1)),
    )


def ladder_elements(spec: DeformationSpec, mode: ModeParams) -> tuple[np.ndarray, np.ndarray]:
    """Deformed lowering and raising matrices on ``|0>..|dim-1>``.

    ``A[n-1, n] = sqrt(F(n))`` and ``A_dag = A.T``.  The raising action out of
    the top state is dropped, so commutator identities only hold on rows
    below ``dim-1``.
    """
    d = mode.dim
    amp = np.sqrt(structure_values(spec, np.arange(1, d)))
    lower = np.diag(amp, k=1)
    return lower, lower.T.copy()
