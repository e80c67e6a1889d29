"""Application services: build scene state, advance it in time and drive runs."""

from mpmfem.application.simulation import RunResult, Simulation, StepReport, run_simulation

__all__ = ["Simulation", "StepReport", "RunResult", "run_simulation"]
