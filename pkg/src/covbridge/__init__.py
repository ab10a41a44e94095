"""Covariance bridges between (possibly degenerate) Gaussian marginals.

Typical use::

    import numpy as np
    from covbridge import LinearSystem, make_marginal, solve_bridge

    sys = LinearSystem(A=[[0, 1], [0, 0]], B=[[0], [1]], T=1.0)
    sol = solve_bridge(sys, make_marginal(np.diag([1.0, 0.0])), make_marginal(np.diag([0.2, 0.0])))
    sol.sigma_at(0.5), sol.gain[0]
"""
from .bridge_core import BoundaryPair, BridgeSolution, boundary_nonsingular, feedback_gain, integrate_lyapunov_pair
from .bridge_singular import (
    EFGBlocks,
    HatSigma,
    SingularBoundary,
    boundary_structure,
    efg_blocks,
    hat_sigmas,
    pT_inverse_limit,
    q0_inverse_limit,
    singular_boundary,
    solve_bridge,
    solve_singular,
)
from .dynamics import (
    LinearSystem,
    MatrixFunction,
    controllability_gramian,
    controllability_probe,
    reachability_gramian,
    state_transition,
)
from .errors import (
    BasisMismatchError,
    BridgeError,
    ClipRequiredError,
    ConfigError,
    EscapeTimeError,
    IntegrationError,
    NotPSDError,
    NotSymmetricError,
    NumericalFailure,
    OutOfRangeError,
    ParseError,
    SingularCovarianceError,
    SingularGramianError,
    SolverError,
    ValidationError,
)
from .psd import GaussianMarginal, make_marginal, perturb, psd_pinv, psd_sqrt
from .report import Check, VerificationReport
from .simulate import (
    SimulationConfig,
    SimulationEnsemble,
    energy_profile,
    simulate_controlled,
    simulate_reverse,
    simulate_uncontrolled,
)
from .verify import ReciprocalPair, VerifyConfig, check_reciprocal, run_full_verification, sweep_epsilon

__version__ = "0.1.0"
