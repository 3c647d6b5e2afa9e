"""Exception types shared across the package."""

import numpy as np


class DimensionError(ValueError):
    """An array does not have the size the model expects."""


class UnknownFrameError(KeyError):
    """A frame name is not registered on the model."""


class ModelError(ValueError):
    """A robot model description violates a structural invariant."""


class SingularSystemError(np.linalg.LinAlgError):
    """A linear system (mass matrix, KKT matrix, constraint stack) is singular."""


class DegenerateWrenchError(ValueError):
    """The resultant normal force vanishes, so the ZMP is undefined."""


class SolverError(RuntimeError):
    """The OCP solver could not make progress."""


class SimulationError(RuntimeError):
    """The simulated state became non-finite or left the admissible region."""
