"""Exception hierarchy.  CLI exit codes are attached to the classes."""


class TWAError(Exception):
    exit_code = 1


class InvalidArgumentError(TWAError, ValueError):
    exit_code = 2


class ScenarioError(TWAError, ValueError):
    exit_code = 2


class UnsupportedScenarioError(TWAError):
    exit_code = 2


class DegenerateGeometryError(TWAError):
    exit_code = 2


class SingularKernelError(TWAError, ZeroDivisionError):
    exit_code = 3


class KernelInconsistencyError(TWAError, ArithmeticError):
    exit_code = 3


class IntegratorFailureError(TWAError, ArithmeticError):
    exit_code = 3


class UndefinedDirectionError(TWAError, ValueError):
    exit_code = 3


class NumericalBlowupError(TWAError, FloatingPointError):
    """Non-finite state; carries where it happened."""

    exit_code = 3

    def __init__(self, message, trajectory=None, step=None, n_blowup=None, n_traj=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.step = step
        self.n_blowup = n_blowup
        self.n_traj = n_traj
