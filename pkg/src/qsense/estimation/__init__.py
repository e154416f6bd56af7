from .bounds import bcrb, entropic_bound, generator, qfi, short_time_check, sld
from .core import (
    AveragedPair,
    BayesOracleResult,
    MeasurementSolution,
    ProbeState,
    Spectrum,
    averaged_pair,
    gain,
    mse,
    optimal_mse,
    pair_from_phases,
    personick_solve,
    qubit_general_solution,
    simulate_bayes,
    solve,
    spectral_measurement,
    sylvester_solve,
)

__all__ = [
    "AveragedPair",
    "BayesOracleResult",
    "MeasurementSolution",
    "ProbeState",
    "Spectrum",
    "averaged_pair",
    "bcrb",
    "entropic_bound",
    "gain",
    "generator",
    "mse",
    "optimal_mse",
    "pair_from_phases",
    "personick_solve",
    "qfi",
    "qubit_general_solution",
    "short_time_check",
    "simulate_bayes",
    "sld",
    "solve",
    "spectral_measurement",
    "sylvester_solve",
]
