"""Environment coefficients and the dissipative generator in the number basis.

The generator acts on ``rho[m, n] = <m|rho|n>``.  Every term couples
``rho[m, n]`` to one of nine source elements ``rho[m+dm, n+dn]``; the
coefficient of each offset is stored as a dense ``dim x dim`` array so the
same numbers drive both the sparse superoperator and the matrix-free
application.

Truncation closure: transitions that would leave the basis through the top
level are removed from the loss terms as well as from the gain terms.  This is
what the operator form of the master equation gives with truncated ladder
matrices, and it keeps the flow exactly trace preserving.  Below the top
level the coefficients are the untruncated ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .algebra import DeformationSpec, ModeParams, energy_levels, omega_shifts
from .errors import UnsupportedModelError

__all__ = [
    "BathModel",
    "DensityMatrix",
    "GeneratorMatrix",
    "OFFSETS",
    "thermal_coefficients",
    "thermal_diffusion",
    "squeezed_preset",
    "positivity_check",
    "bath_tables",
    "assemble_generator",
    "apply_generator",
    "max_stable_step",
]

BATH_KINDS = ("thermal", "squeezed", "custom")

# source offsets (dm, dn): d rho[m, n]/dt gets C[k][m, n] * rho[m + dm, n + dn].
# Sorted by vectorized column so matrix-free sums run in CSR order.
OFFSETS = ((-2, 0), (-1, -1), (-1, 1), (0, -2), (0, 0), (0, 2), (1, -1), (1, 1), (2, 0))


@dataclass(frozen=True, eq=False)
class BathModel:
    """Environment coefficient model.

    ``thermal`` uses ``lam`` and ``beta`` (``beta=inf`` is T=0).  ``squeezed``
    uses ``gamma``, ``nbar_bath`` and ``m_squeeze``.  ``custom`` takes per-level
    tables ``d_plus``, ``d_minus`` and ``d_pq`` indexed by n = 0..dim-1; a scalar
    is read as a constant table.
    """

    kind: str
    lam: float = 0.0
    beta: float | None = None
    gamma: float | None = None
    nbar_bath: float | None = None
    m_squeeze: complex = 0.0
    d_plus: object = None
    d_minus: object = 0.0
    d_pq: object = 0.0

    def __post_init__(self):
        if self.kind not in BATH_KINDS:
            raise ValueError(f"unknown bath kind {self.kind!r}")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ValueError("lambda must be finite and >= 0")
        if self.kind == "thermal":
            if self.beta is None or math.isnan(self.beta) or self.beta <= 0:
                raise ValueError("thermal bath needs beta > 0 (inf for T=0)")
        elif self.kind == "squeezed":
            if self.gamma is None or not (math.isfinite(self.gamma) and self.gamma >= 0):
                raise ValueError("squeezed bath needs finite gamma >= 0")
            if self.nbar_bath is None or not self.nbar_bath >= 0:
                raise ValueError("squeezed bath needs nbar_bath >= 0")
            object.__setattr__(self, "lam", float(self.gamma))
        else:
            if self.d_plus is None:
                raise ValueError("custom bath needs a d_plus table")
            for name in ("d_plus", "d_minus", "d_pq"):
                val = getattr(self, name)
                if not np.all(np.isfinite(val)):
                    raise ValueError(f"custom table {name} must be finite")
                if np.ndim(val):
                    object.__setattr__(self, name, np.asarray(val))
            if np.iscomplexobj(self.d_pq):
                raise ValueError("d_pq must be real")

    @classmethod
    def thermal(cls, lam: float, beta: float) -> "BathModel":
        return cls("thermal", lam=float(lam), beta=float(beta))

    @classmethod
    def squeezed(cls, gamma: float, nbar_bath: float, m_squeeze: complex = 0.0) -> "BathModel":
        return cls("squeezed", gamma=float(gamma), nbar_bath=float(nbar_bath),
                   m_squeeze=complex(m_squeeze))

    @classmethod
    def custom(cls, lam: float, d_plus, d_minus=0.0, d_pq=0.0) -> "BathModel":
        return cls("custom", lam=float(lam), d_plus=d_plus, d_minus=d_minus, d_pq=d_pq)

    @property
    def decoupled(self) -> bool:
        """True when populations do not couple to coherences (D_- = D_pq = 0)."""
        if self.kind == "thermal":
            return True
        if self.kind == "squeezed":
            return self.m_squeeze == 0
        return bool(np.all(np.asarray(self.d_minus) == 0) and np.all(np.asarray(self.d_pq) == 0))


class DensityMatrix:
    """Complex density matrix on the truncated number basis.

    Validated at construction (Hermitian, unit trace, positive semidefinite)
    unless ``check=False``, which trajectories use for states that are
    allowed to drift.
    """

    herm_tol = 1e-12
    trace_tol = 1e-12
    eig_tol = -1e-10

    def __init__(self, data, check: bool = True):
        data = np.array(data, dtype=complex)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ValueError("density matrix must be square")
        self.data = data
        if check:
            self.validate()

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def validate(self):
        rho = self.data
        if np.max(np.abs(rho - rho.conj().T)) > self.herm_tol:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1.0) > self.trace_tol:
            raise ValueError(f"density matrix trace {np.trace(rho).real!r} != 1")
        if self.min_eigenvalue() < self.eig_tol:
            raise ValueError("density matrix is not positive semidefinite")

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.data + self.data.conj().T)
        return float(np.linalg.eigvalsh(herm)[0])

    @property
    def populations(self) -> np.ndarray:
        return self.data.diagonal().real.copy()

    @classmethod
    def fock(cls, dim: int, n: int) -> "DensityMatrix":
        if not 0 <= n < dim:
            raise ValueError(f"Fock state {n} outside basis of size {dim}")
        rho = np.zeros((dim, dim), dtype=complex)
        rho[n, n] = 1.0
        return cls(rho)

    @classmethod
    def diagonal(cls, weights: Sequence[float]) -> "DensityMatrix":
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be nonnegative with a positive sum")
        return cls(np.diag(w / w.sum()))

    @classmethod
    def pure(cls, amplitudes) -> "DensityMatrix":
        psi = np.asarray(amplitudes, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim})"


def _as_array(rho) -> np.ndarray:
    return rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)


def _coth_half(beta: float, omega_shift):
    """coth(beta * Omega / 2), exactly 1 at beta = inf."""
    omega_shift = np.asarray(omega_shift, dtype=float)
    if np.any(omega_shift <= 0):
        raise ValueError("thermal coefficients need Omega(n) > 0")
    if math.isinf(beta):
        return np.ones_like(omega_shift)
    return 1.0 / np.tanh(0.5 * beta * omega_shift)


def thermal_coefficients(spec: DeformationSpec, bath: BathModel, mode: ModeParams, n):
    """Thermal-bath (D_plus, D_minus, D_pq) at level(s) ``n``.

    D_plus = (lam/2) coth(beta Omega(n)/2); D_minus and D_pq vanish.
    """
    if bath.kind != "thermal":
        raise UnsupportedModelError("thermal_coefficients needs a thermal bath")
    n = np.asarray(n)
    d_plus = 0.5 * bath.lam * _coth_half(bath.beta, omega_shifts(spec, n))
    zero = np.zeros_like(d_plus)
    if d_plus.ndim == 0:
        return float(d_plus), 0.0, 0.0
    return d_plus, zero, zero


def thermal_diffusion(lam: float, beta: float, omega_shift: float, omega: float = 1.0):
    """(D_pp, D_qq, D_pq) of the thermal model at one frequency shift (m = 1)."""
    c = float(_coth_half(beta, omega_shift))
    return omega * 0.5 * lam * c, 0.5 * lam * c / omega, 0.0


def squeezed_preset(gamma: float, nbar_bath: float, m_squeeze: complex) -> BathModel:
    """Squeezed-bath coefficients as an equivalent custom model.

    D_plus = gamma (nbar + 1/2), lambda = gamma, and D_minus + i D_pq = -gamma M
    with the real part assigned to D_minus and the imaginary part to D_pq.
    """
    if not (gamma >= 0 and nbar_bath >= 0):
        raise ValueError("gamma and nbar_bath must be >= 0")
    combined = -gamma * complex(m_squeeze)
    return BathModel.custom(
        lam=gamma,
        d_plus=gamma * (nbar_bath + 0.5),
        d_minus=combined.real,
        d_pq=combined.imag,
    )


def positivity_check(d_pp: float, d_qq: float, d_pq: float, lam: float) -> bool:
    """Whether the diffusion coefficients keep the density operator positive."""
    return bool(d_pp > 0 and d_qq > 0 and d_pp * d_qq - d_pq**2 >= 0.25 * lam**2)


def _broadcast(table, dim: int, name: str, dtype) -> np.ndarray:
    arr = np.asarray(table, dtype=dtype)
    if arr.ndim == 0:
        return np.full(dim, arr, dtype=dtype)
    if arr.shape[0] < dim:
        raise IndexError(f"custom table {name} has {arr.shape[0]} entries, need {dim}")
    return arr[:dim].copy()


def bath_tables(spec: DeformationSpec, bath: BathModel, mode: ModeParams):
    """Per-level D_plus (real) and D_minus + i D_pq (complex), n = 0..dim-1."""
    dim = mode.dim
    if bath.kind == "thermal":
        d_plus, _, _ = thermal_coefficients(spec, bath, mode, np.arange(dim))
        return np.asarray(d_plus, dtype=float), np.zeros(dim, dtype=complex)
    if bath.kind == "squeezed":
        bath = squeezed_preset(bath.gamma, bath.nbar_bath, bath.m_squeeze)
    d_plus = _broadcast(bath.d_plus, dim, "d_plus", float)
    d_minus = _broadcast(bath.d_minus, dim, "d_minus", complex)
    d_pq = _broadcast(bath.d_pq, dim, "d_pq", float)
    return d_plus, d_minus + 1j * d_pq


def _stencil(energies: np.ndarray, d: np.ndarray, g: np.ndarray, lam: float) -> np.ndarray:
    dim = energies.shape[0]
    k = np.arange(dim, dtype=float)
    up = np.where(k < dim - 1, k + 1.0, 0.0)         # raising count with top closure
    d_below = np.concatenate([[0.0], d[:-1]])       # D_plus(Omega(k-1)); weight k kills k=0
    g_below = np.concatenate([[0.0], g[:-1]])
    g_below2 = np.concatenate([[0.0, 0.0], g[:-2]])
    g_above = np.concatenate([g[1:], [0.0]])
    m = k[:, None]
    n = k[None, :]
    loss = up * d + k * d_below
    ones = np.ones((dim, dim))
    terms = {
        (0, 0): (
            -1j * (energies[:, None] - energies[None, :])
            - (loss[:, None] + loss[None, :])
            + 0.5 * lam * ((up - k)[:, None] + (up - k)[None, :])
        ),
        (1, 1): np.sqrt((m + 1) * (n + 1)) * (d[:, None] + d[None, :] + lam),
        (-1, -1): np.sqrt(m * n) * (d_below[:, None] + d_below[None, :] - lam),
        (1, -1): -np.sqrt((m + 1) * n) * (g.conj()[:, None] + g_below.conj()[None, :]),
        (-1, 1): -np.sqrt(m * (n + 1)) * (g_below[:, None] + g[None, :]),
        (2, 0): np.sqrt((m + 1) * (m + 2)) * g_above.conj()[:, None] * ones,
        (0, 2): np.sqrt((n + 1) * (n + 2)) * g_above[None, :] * ones,
        (-2, 0): np.sqrt(m * (m - 1)) * g_below2[:, None] * ones,
        (0, -2): np.sqrt(n * (n - 1)) * g_below2.conj()[None, :] * ones,
    }
    coeffs = np.array([terms[off] for off in OFFSETS], dtype=complex)

    # zero every coupling whose source element lies outside the basis
    for i, (dm, dn) in enumerate(OFFSETS):
        src_m = k + dm
        src_n = k + dn
        ok = ((src_m >= 0) & (src_m < dim))[:, None] & ((src_n >= 0) & (src_n < dim))[None, :]
        coeffs[i][~ok] = 0.0
    return coeffs


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """Linear map rho -> d rho/dt on the truncated basis.

    ``coeffs[k]`` multiplies the source element at ``OFFSETS[k]``.  The
    vectorized index is ``m * dim + n``.
    """

    dim: int
    coeffs: np.ndarray
    deformation: DeformationSpec
    bath: BathModel
    mode: ModeParams
    d_plus: np.ndarray
    g: np.ndarray
    materialized: bool = True
    _sparse: list = field(default_factory=list, repr=False)

    @property
    def matrix(self) -> sp.csr_matrix:
        """The sparse dim^2 x dim^2 superoperator (built on first access)."""
        if not self._sparse:
            self._sparse.append(_to_sparse(self.coeffs))
        return self._sparse[0]

    def __matmul__(self, vec):
        return self.matrix @ vec


def _to_sparse(coeffs: np.ndarray) -> sp.csr_matrix:
    dim = coeffs.shape[1]
    rows, cols, vals = [], [], []
    for c, (dm, dn) in zip(coeffs, OFFSETS):
        m, n = np.nonzero(c)
        rows.append(m * dim + n)
        cols.append((m + dm) * dim + (n + dn))
        vals.append(c[m, n])
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim * dim, dim * dim),
    ).tocsr()
    mat.sum_duplicates()
    mat.eliminate_zeros()
    return mat


def assemble_generator(
    spec: DeformationSpec,
    bath: BathModel,
    mode: ModeParams,
    materialize: bool = True,
) -> GeneratorMatrix:
    """Build the generator of the damped deformed oscillator.

    Requires the deformation to cover F(dim+1) and custom bath tables to
    cover n = 0..dim-1.  With ``materialize=False`` the sparse matrix is not
    built until ``GeneratorMatrix.matrix`` is accessed.
    """
    if spec.max_level < mode.dim + 1:
        raise IndexError(f"deformation table must cover F(dim+1) = F({mode.dim + 1})")
    energies = energy_levels(spec, mode)
    d_plus, g = bath_tables(spec, bath, mode)
    coeffs = _stencil(energies, d_plus, g, bath.lam)
    gen = GeneratorMatrix(mode.dim, coeffs, spec, bath, mode, d_plus, g, materialize)
    if materialize:
        gen.matrix
    return gen


def apply_generator(gen: GeneratorMatrix, rho) -> np.ndarray:
    """d rho/dt for a density matrix (or any square array of matching size)."""
    arr = _as_array(rho)
    dim = gen.dim
    if arr.shape != (dim, dim):
        raise ValueError(f"state shape {arr.shape} does not match generator dim {dim}")
    if gen.materialized:
        return (gen.matrix @ arr.reshape(-1)).reshape(dim, dim)
    out = np.zeros((dim, dim), dtype=complex)
    for c, (dm, dn) in zip(gen.coeffs, OFFSETS):
        m0, m1 = max(0, -dm), min(dim, dim - dm)
        n0, n1 = max(0, -dn), min(dim, dim - dn)
        out[m0:m1, n0:n1] += c[m0:m1, n0:n1] * arr[m0 + dm:m1 + dm, n0 + dn:n1 + dn]
    return out


def max_stable_step(gen: GeneratorMatrix) -> float:
    """Largest RK4 step accepted by the integrator for this generator."""
    spec, mode = gen.deformation, gen.mode
    top_shift = float(omega_shifts(spec, mode.dim - 1))
    scale = mode.omega * abs(top_shift) + 4 * mode.dim * float(np.max(np.abs(gen.d_plus)))
    return 0.1 / scale
