"""LM rate of constellation-input channels under a mismatched decoding metric.

Rates are in nats unless a key says otherwise.
"""

from ._lmrate import (
    NumericalError,
    Problem,
    awgn_problem,
    constellation,
    dual_gradient,
    dual_objective,
    gmi,
    gmi_objective,
    kernel_structure,
    make_problem,
    newton_oracle,
    solve,
)

__all__ = [
    "NumericalError",
    "Problem",
    "awgn_problem",
    "constellation",
    "dual_gradient",
    "dual_objective",
    "gmi",
    "gmi_objective",
    "kernel_structure",
    "make_problem",
    "newton_oracle",
    "solve",
]
