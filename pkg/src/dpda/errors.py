"""Exception types shared across modules."""


class SolverDivergedError(RuntimeError):
    """A solver produced a non-finite iterate.

    Attributes
    ----------
    agent : int
        First agent with a non-finite entry.
    step : int
        Iteration (1-based) at which it appeared.
    """

    def __init__(self, agent: int, step: int, what: str = "iterate"):
        super().__init__(f"non-finite {what} at agent {agent}, iteration {step}")
        self.agent = agent
        self.step = step


class ConfigError(ValueError):
    """Invalid run configuration."""
