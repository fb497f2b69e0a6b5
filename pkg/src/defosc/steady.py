"""Population ladder, steady states and deformed thermodynamics.

When the bath leaves populations decoupled from coherences, ``P(n) = rho[n, n]``
follows a birth-death chain with rates

    t_+(n) = (n+1) [2 D_+(Omega(n)) - lambda]
    t_-(n) = n     [2 D_+(Omega(n-1)) + lambda]

The stationary distribution is available in closed product form and, as an
independent check, from a linear solve of the rate matrix.  Thermal baths
give the Boltzmann distribution of the deformed spectrum.

All temperatures enter through the dimensionless ``beta = hbar omega / kT``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .algebra import DeformationSpec, ModeParams, energy_levels, omega_shifts, q_bracket
from .errors import DegenerateModelError, NumericalError, UnsupportedModelError
from .liouvillian import BathModel, bath_tables

__all__ = [
    "RateChain",
    "PopulationVector",
    "ThermoResult",
    "transition_rates",
    "steady_product",
    "steady_nullspace",
    "detailed_balance_residual",
    "thermal_distribution",
    "partition_q",
    "zq_small_tau",
    "equilibrium_energy_closed",
    "equilibrium_energy_series",
    "thermo",
]

DEFAULT_TOL = 1e-15
MIN_BETA = 1e-6
ACCEPT_TAIL = 1e-12


@dataclass(frozen=True, eq=False)
class RateChain:
    """Birth-death rates; ``up[n] = t_+(n)`` for n < dim-1, ``down[n-1] = t_-(n)`` for n >= 1."""

    up: np.ndarray
    down: np.ndarray

    def __post_init__(self):
        up = np.asarray(self.up, dtype=float)
        down = np.asarray(self.down, dtype=float)
        if up.shape != down.shape or up.ndim != 1 or up.size < 1:
            raise ValueError("up and down must be 1-d with dim-1 entries each")
        if not (np.all(np.isfinite(up)) and np.all(np.isfinite(down))):
            raise ValueError("rates must be finite")
        object.__setattr__(self, "up", up)
        object.__setattr__(self, "down", down)

    @property
    def dim(self) -> int:
        return self.up.size + 1

    @property
    def has_negative_rates(self) -> bool:
        return bool(np.any(self.up < 0) or np.any(self.down < 0))

    def rate_matrix(self) -> np.ndarray:
        """Q with dP/dt = Q @ P; columns sum to zero."""
        q = np.diag(self.up, -1) + np.diag(self.down, 1)
        q -= np.diag(q.sum(axis=0))
        return q


@dataclass(frozen=True, eq=False)
class PopulationVector:
    p: np.ndarray
    # set when a product factor is negative; p is then left unnormalized
    negative_factor: bool = False
    tail_bound: float | None = None

    def __len__(self):
        return self.p.size

    @property
    def mean(self) -> float:
        return float(np.arange(self.p.size) @ self.p)


@dataclass(frozen=True)
class ThermoResult:
    beta: float
    tau: float
    Z: float
    Z_q: float
    Z_q_expansion: float
    b: float
    moments: dict = field(default_factory=dict)
    E_inf_closed: float = math.nan
    E_inf_series: float = math.nan
    tail_bound: float = math.nan


def _check_beta(beta: float, allow_inf: bool = False):
    if math.isnan(beta) or beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta!r}")
    if math.isinf(beta) and not allow_inf:
        raise ValueError("beta must be finite here")


def transition_rates(spec: DeformationSpec, bath: BathModel, mode: ModeParams) -> RateChain:
    if not bath.decoupled:
        raise UnsupportedModelError("transition rates need D_minus = D_pq = 0")
    n = np.arange(mode.dim - 1, dtype=float)
    lam = bath.lam
    if bath.kind == "thermal":
        # 2 D_+ -/+ lam = lam (coth(x/2) -/+ 1), written without cancellation
        shift = omega_shifts(spec, np.arange(mode.dim - 1))
        if np.any(shift <= 0):
            raise ValueError("thermal rates need Omega(n) > 0")
        with np.errstate(over="ignore"):
            excess = 2.0 * lam / np.expm1(bath.beta * shift)
        up = (n + 1) * excess
        down = (n + 1) * (2.0 * lam + excess)
    else:
        d_plus, _ = bath_tables(spec, bath, mode)
        d = d_plus[:-1]
        up = (n + 1) * (2.0 * d - lam)
        down = (n + 1) * (2.0 * d + lam)
    return RateChain(up, down)


def steady_product(chain: RateChain) -> PopulationVector:
    """Closed-form stationary distribution, normalized over the truncated basis."""
    if np.any(chain.down == 0):
        raise DegenerateModelError("zero downward rate: product factor undefined")
    factors = chain.up / chain.down
    p = np.concatenate([[1.0], np.cumprod(factors)])
    if np.any(factors < 0):
        return PopulationVector(p, negative_factor=True)
    return PopulationVector(p / p.sum())


def steady_nullspace(chain: RateChain) -> PopulationVector:
    """Stationary distribution from the rate matrix with one row swapped for normalization."""
    q = chain.rate_matrix()
    q[0, :] = 1.0
    rhs = np.zeros(chain.dim)
    rhs[0] = 1.0
    try:
        p = scipy.linalg.solve(q, rhs)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise DegenerateModelError(f"rate matrix kernel is not one-dimensional: {exc}") from exc
    if not np.all(np.isfinite(p)):
        raise DegenerateModelError("rate matrix kernel is not one-dimensional")
    return PopulationVector(p)


def detailed_balance_residual(chain: RateChain, p) -> float:
    p = p.p if isinstance(p, PopulationVector) else np.asarray(p)
    if p.size != chain.dim:
        raise ValueError("population length does not match chain")
    return float(np.max(np.abs(chain.down * p[1:] - chain.up * p[:-1])))


def thermal_distribution(spec: DeformationSpec, mode: ModeParams, beta: float):
    """Deformed Boltzmann populations on the truncated basis and the truncated Z_f.

    Returns ``(PopulationVector, Z_f)``.  The population vector carries a
    bound on the probability mass beyond the basis, valid whenever the level
    spacing is nondecreasing (identity and q-deformed cases).
    """
    _check_beta(beta, allow_inf=True)
    unit = ModeParams(1.0, mode.dim)
    e = energy_levels(spec, unit)
    w = np.exp(-beta * (e - e[0])) if math.isfinite(beta) else (e == e[0]).astype(float)
    total = w.sum()
    p = w / total
    z_f = float(total * math.exp(-beta * e[0]))
    r = math.exp(-beta * (e[-1] - e[-2])) if math.isfinite(beta) else 0.0
    tail = p[-1] * r / (1.0 - r) if r < 1 else math.inf
    return PopulationVector(p, tail_bound=float(tail)), z_f


def _series_terms(beta: float, tau: float, tol: float):
    """Boltzmann weights of the q-spectrum, summed until they drop below tol * sum."""
    _check_beta(beta)
    if not tol > 0:
        raise ValueError("tol must be > 0")
    tau = abs(tau)
    levels, weights = [], []
    partial = 0.0
    n = 0
    f_prev = 0.0
    while True:
        f_next = float(q_bracket(n + 1, tau))
        energy = 0.5 * (f_next + f_prev)
        term = math.exp(-beta * energy)
        levels.append(energy)
        weights.append(term)
        partial += term
        if term < tol * partial or term == 0.0:
            break
        n += 1
        f_prev = f_next
    ratio = weights[-1] / weights[-2] if len(weights) > 1 else 0.0
    tail = weights[-1] * ratio / (1.0 - ratio) if ratio < 1 else math.inf
    return np.array(levels), np.array(weights), tail


def partition_q(beta: float, tau: float, tol: float = DEFAULT_TOL) -> tuple[float, float]:
    """q-deformed partition function and a geometric bound on the omitted tail."""
    _, w, tail = _series_terms(beta, tau, tol)
    return math.fsum(w), tail


def _y_forms(beta: float):
    _check_beta(beta)
    if beta < MIN_BETA:
        raise ValueError(f"beta below {MIN_BETA} is outside the small-deformation regime")
    y = math.exp(-beta)
    one_minus = -math.expm1(-beta)
    return y, one_minus


def zq_small_tau(beta: float, tau: float):
    """``(Z + b tau^2, b, moments)`` for the small-deformation partition function.

    The moments are the undeformed thermal averages of n, n^2, n^3.
    """
    y, om = _y_forms(beta)
    moments = {
        "nbar": y / om,
        "nbar2": y * (1 + y) / om**2,
        "nbar3": y * (1 + 4 * y + y * y) / om**3,
    }
    z = math.exp(-0.5 * beta) / om
    b = -(beta * z / 12.0) * (2 * moments["nbar3"] + 3 * moments["nbar2"] + moments["nbar"])
    return z + b * tau**2, b, moments


def energy_correction(beta: float) -> float:
    """Coefficient c of tau^2 in the equilibrium energy (units of hbar omega / 2)."""
    y, om = _y_forms(beta)
    return y / om**2 * ((1 + y) / om - beta * (1 + 4 * y + y * y) / om**2)


def equilibrium_energy_closed(beta: float, tau: float, omega: float = 1.0) -> float:
    y, om = _y_forms(beta)
    coth_half = (1 + y) / om
    return 0.5 * omega * (coth_half + tau**2 * energy_correction(beta))


def equilibrium_energy_series(beta: float, tau: float, omega: float = 1.0,
                              tol: float = DEFAULT_TOL) -> float:
    """Exact mean energy of the deformed Boltzmann state by termwise summation."""
    e, w, _ = _series_terms(beta, tau, tol)
    return omega * math.fsum(e * w) / math.fsum(w)


def thermo(beta: float, tau: float, omega: float = 1.0, tol: float = DEFAULT_TOL) -> ThermoResult:
    """All thermodynamic quantities at one (beta, tau)."""
    z_q, tail = partition_q(beta, tau, tol)
    if not tail < ACCEPT_TAIL:
        raise NumericalError(f"partition tail bound {tail:.3g} exceeds {ACCEPT_TAIL}")
    z_exp, b, moments = zq_small_tau(beta, tau)
    return ThermoResult(
        beta=beta,
        tau=tau,
        Z=0.5 / math.sinh(0.5 * beta),
        Z_q=z_q,
        Z_q_expansion=z_exp,
        b=b,
        moments=moments,
        E_inf_closed=equilibrium_energy_closed(beta, tau, omega),
        E_inf_series=equilibrium_energy_series(beta, tau, omega, tol),
        tail_bound=tail,
    )
