"""Time evolution of the density matrix and observable trajectories."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .algebra import DeformationSpec, ModeParams, energy_levels, omega_shifts
from .errors import IntegrationError, UnsupportedModelError
from .liouvillian import BathModel, DensityMatrix, GeneratorMatrix, max_stable_step
from .steady import thermal_distribution

__all__ = [
    "InitialState",
    "Trajectory",
    "integrate",
    "expectations",
    "free_evolution_exact",
    "mean_quanta_flow",
    "TRACE_HARD_CAP",
]

log = logging.getLogger(__name__)

TRACE_HARD_CAP = 1e-6
OBSERVABLES = ("mean_N", "mean_a", "mean_Omega_a", "energy", "trace_err", "min_eig")


@dataclass(frozen=True)
class InitialState:
    """Recipe for rho(0): ``fock`` (n), ``thermal`` (beta), ``diagonal`` (weights) or ``file`` (path).

    Files are ``.npy`` arrays or JSON objects ``{"re": [[...]], "im": [[...]]}``.
    """

    kind: str = "fock"
    n: int = 0
    beta: float | None = None
    weights: tuple[float, ...] | None = None
    path: str | None = None

    def build(self, spec: DeformationSpec, mode: ModeParams) -> DensityMatrix:
        if self.kind == "fock":
            return DensityMatrix.fock(mode.dim, self.n)
        if self.kind == "thermal":
            if self.beta is None:
                raise ValueError("thermal initial state needs beta")
            pops, _ = thermal_distribution(spec, mode, self.beta)
            return DensityMatrix(np.diag(pops.p))
        if self.kind == "diagonal":
            if self.weights is None or len(self.weights) != mode.dim:
                raise ValueError(f"diagonal initial state needs {mode.dim} weights")
            return DensityMatrix.diagonal(self.weights)
        if self.kind == "file":
            return DensityMatrix(_load_matrix(Path(self.path)))
        raise ValueError(f"unknown initial state kind {self.kind!r}")


def _load_matrix(path: Path) -> np.ndarray:
    if path.suffix == ".npy":
        return np.load(path)
    with open(path) as fh:
        raw = json.load(fh)
    re = np.asarray(raw["re"], dtype=float)
    im = np.asarray(raw.get("im", np.zeros_like(re)), dtype=float)
    return re + 1j * im


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    observables: dict = field(default_factory=dict)

    def records(self) -> list[dict]:
        return [
            {"t": float(t), **{k: self.observables[k][i] for k in OBSERVABLES}}
            for i, t in enumerate(self.times)
        ]


class _Observer:
    """Precomputed weights for the trajectory observables."""

    def __init__(self, spec: DeformationSpec, mode: ModeParams):
        d = mode.dim
        self.number = np.arange(d, dtype=float)
        self.sqrt_up = np.sqrt(np.arange(1, d, dtype=float))
        self.shift_a = omega_shifts(spec, np.arange(d - 1)) * self.sqrt_up
        self.energies = energy_levels(spec, mode)

    def __call__(self, rho: np.ndarray) -> dict:
        pops = rho.diagonal().real
        sub = rho.diagonal(-1)
        return {
            "mean_N": float(self.number @ pops),
            "mean_a": complex(self.sqrt_up @ sub),
            "mean_Omega_a": complex(self.shift_a @ sub),
            "energy": float(self.energies @ pops),
        }


def expectations(rho, spec: DeformationSpec, mode: ModeParams) -> dict:
    """<N>, <a>, <Omega(N) a> and <H> for one state."""
    arr = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)
    return _Observer(spec, mode)(arr)


def free_evolution_exact(spec: DeformationSpec, mode: ModeParams, rho0, t: float) -> DensityMatrix:
    """Closed-form evolution without dissipation: each rho[m, n] rotates at E_m - E_n."""
    arr = rho0.data if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)
    e = energy_levels(spec, mode)
    phase = np.exp(-1j * (e[:, None] - e[None, :]) * t)
    return DensityMatrix(phase * arr, check=False)


def mean_quanta_flow(rho, spec: DeformationSpec, bath: BathModel, mode: ModeParams) -> float:
    """d<N>/dt for a thermal bath, summed level by level over the populations."""
    if bath.kind != "thermal":
        raise UnsupportedModelError("mean_quanta_flow needs a thermal bath")
    arr = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)
    pops = arr.diagonal().real
    n = np.arange(mode.dim, dtype=float)
    if math.isinf(bath.beta):
        return -2.0 * bath.lam * float(n @ pops)
    shift = omega_shifts(spec, np.arange(mode.dim))
    # coth(x/2) - 1 = 2 / expm1(x)
    with np.errstate(over="ignore"):
        excess = 2.0 / np.expm1(bath.beta * shift)
    gain = excess * (n + 1)
    loss = np.concatenate([[0.0], 2.0 + excess[:-1]]) * n
    return float(bath.lam * ((gain - loss) @ pops))


def integrate(
    gen: GeneratorMatrix,
    rho0,
    t_end: float,
    dt: float,
    sample_every: int = 1,
    trace_tol: float = TRACE_HARD_CAP,
    keep_states: bool = True,
    check_step: bool = True,
) -> Trajectory:
    """Fixed-step RK4 integration of d rho/dt = L rho.

    The step is shrunk to ``t_end / ceil(t_end / dt)`` so the last sample
    lands on ``t_end``.  The trace is never renormalized; a deviation above
    ``trace_tol`` (capped at 1e-6) or any non-finite entry aborts with
    :class:`IntegrationError`.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if not t_end >= 0:
        raise ValueError("t_end must be >= 0")
    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")
    if check_step and dt > max_stable_step(gen):
        raise ValueError(f"dt={dt} exceeds the step bound {max_stable_step(gen):.3g}")
    trace_tol = min(trace_tol, TRACE_HARD_CAP)

    arr0 = rho0.data if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)
    dim = gen.dim
    if arr0.shape != (dim, dim):
        raise ValueError("initial state does not match generator dimension")

    n_steps = math.ceil(t_end / dt - 1e-9) if t_end > 0 else 0
    h = t_end / n_steps if n_steps else 0.0
    mat = gen.matrix
    observe = _Observer(gen.deformation, gen.mode)

    times, states = [], []
    obs = {k: [] for k in OBSERVABLES}

    def record(step, y):
        rho = y.reshape(dim, dim)
        state = DensityMatrix(rho.copy(), check=False)
        trace_err = abs(np.trace(rho) - 1.0)
        if trace_err > trace_tol:
            raise IntegrationError(f"trace drift {trace_err:.3g} above {trace_tol:.3g}", step)
        times.append(step * h)
        if keep_states:
            states.append(state)
        for k, v in observe(rho).items():
            obs[k].append(v)
        obs["trace_err"].append(float(trace_err))
        obs["min_eig"].append(state.min_eigenvalue())

    y = arr0.reshape(-1).astype(complex)
    record(0, y)
    for step in range(1, n_steps + 1):
        k1 = mat @ y
        k2 = mat @ (y + 0.5 * h * k1)
        k3 = mat @ (y + 0.5 * h * k2)
        k4 = mat @ (y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise IntegrationError("non-finite state", step)
        if step % sample_every == 0 or step == n_steps:
            record(step, y)
    log.debug("integrated %d steps of size %g", n_steps, h)
    return Trajectory(
        times=np.array(times),
        states=states,
        observables={k: np.array(v) for k, v in obs.items()},
    )
