"""Block LMI modelling and a dense primal-dual interior-point SDP solver."""
from .problem import CanonicalForm, LmiBlock, MatrixVariable, SdpProblem, canonicalize, evaluate_block
from .solver import SdpSolution, SolverOptions, Status, solve_canonical, solve_sdp

__all__ = [
    "CanonicalForm", "LmiBlock", "MatrixVariable", "SdpProblem", "canonicalize",
    "evaluate_block", "SdpSolution", "SolverOptions", "Status", "solve_canonical", "solve_sdp",
]
