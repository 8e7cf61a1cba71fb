"""Error hierarchy shared by every module, plus the CLI exit-code table."""
from typing import Optional, Sequence


class ChemostatError(Exception):
    """Base class of all errors raised by random_chemostat."""


class ConfigurationError(ChemostatError, ValueError):
    """Invalid parameter value, config document, override or grid."""


class DomainError(ChemostatError, ValueError):
    """A function was evaluated outside of its domain."""


class UsageError(ChemostatError, TypeError):
    """An operation was called without its precondition (eg wrong kinetics)."""


class AnalysisError(ChemostatError):
    """A closed-form quantity of the analysis is unavailable."""


class IntegrationBlowupError(ChemostatError, ArithmeticError):
    """
    The RK4 scheme produced a negative excursion beyond the clamp tolerance
    or a non-finite value.

    Parameters
    ----------
    t : float
        Time at the end of the failing step
    state : Sequence[float]
        State after the failing step
    seed : int, optional
        Seed of the noise path, if known
    """

    def __init__(self, t: float, state: Sequence[float], seed: Optional[int] = None):
        self.t = float(t)
        self.state = tuple(float(v) for v in state)
        self.seed = seed
        super().__init__(self._message())

    def _message(self) -> str:
        where = '' if self.seed is None else f" (seed {self.seed})"
        values = ', '.join(f"{v:.6g}" for v in self.state)
        return (f"Integration blew up at t={self.t:.6g}{where}: state ({values}); "
                f"reduce dt")

    def with_seed(self, seed: int) -> 'IntegrationBlowupError':
        return IntegrationBlowupError(self.t, self.state, seed)

    def __reduce__(self):
        return (IntegrationBlowupError, (self.t, self.state, self.seed))


# Checked in order, most specific first
EXIT_CODES = (
    (IntegrationBlowupError, 2),
    (AnalysisError, 3),
    (ConfigurationError, 1),
    (DomainError, 1),
    (UsageError, 1),
    (ChemostatError, 1),
)


def exit_code(error: BaseException) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(error, cls):
            return code
    return 1
