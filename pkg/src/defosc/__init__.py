"""Damped f-/q-deformed quantum harmonic oscillator toolkit."""
from .algebra import (
    DeformationSpec,
    ModeParams,
    SpectrumTable,
    deformation_factor,
    energy_level,
    energy_levels,
    ladder_elements,
    omega_shift,
    omega_shifts,
    spectrum,
    structure_value,
    structure_values,
)
from .errors import (
    DegenerateModelError,
    IntegrationError,
    NumericalError,
    UnsupportedModelError,
)
from .evolve import (
    InitialState,
    Trajectory,
    expectations,
    free_evolution_exact,
    integrate,
    mean_quanta_flow,
)
from .liouvillian import (
    BathModel,
    DensityMatrix,
    GeneratorMatrix,
    apply_generator,
    assemble_generator,
    max_stable_step,
    positivity_check,
    squeezed_preset,
    thermal_coefficients,
)
from .steady import (
    PopulationVector,
    RateChain,
    ThermoResult,
    detailed_balance_residual,
    equilibrium_energy_closed,
    equilibrium_energy_series,
    partition_q,
    steady_nullspace,
    steady_product,
    thermal_distribution,
    thermo,
    transition_rates,
    zq_small_tau,
)

__version__ = "0.1.0"
