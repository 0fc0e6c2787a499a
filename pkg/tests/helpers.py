"""Problem builders shared by several test modules."""

import numpy as np

from dpda.cones import NonnegativeOrthant
from dpda.functions import IndicatorBox, Quadratic, Zero
from dpda.problems import AgentProblem, ResourceAgentProblem


def agents_with(L, sigma, n=2, m=2, rho=None):
    """Agents whose Lipschitz constants and constraint norms are exactly ``L`` and ``sigma``."""
    out = []
    for Li, si in zip(L, sigma):
        A = np.zeros((m, n))
        A[0, 0] = si
        out.append(AgentProblem(n, 0, rho or Zero(), Quadratic(Li * np.eye(n)), A, np.zeros(m), NonnegativeOrthant(m)))
    return out


def resource_agents_with(L, sigma, n=2, m=2):
    out = []
    for Li, si in zip(L, sigma):
        R = np.zeros((m, n))
        R[0, 0] = si
        out.append(ResourceAgentProblem(IndicatorBox(-1.0, 1.0), Quadratic(Li * np.eye(n)), R, np.zeros(m),
                                        NonnegativeOrthant(m)))
    return out
