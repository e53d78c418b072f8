"""Exception types shared by every speclab module.

Each error carries a short machine-readable ``code`` (``invalid-dimension``,
``numeric-breakdown``, ...) which the command line prints on stderr and maps
onto an exit status.
"""


class SpeclabError(Exception):
    code = "speclab-error"
    exit_status = 2

    def __init__(self, message="", **diagnostics):
        super().__init__(message or self.code)
        self.diagnostics = diagnostics

    def __str__(self):
        msg = super().__str__()
        return f"{self.code}: {msg}" if msg != self.code else msg


class InvalidDimension(SpeclabError, ValueError):
    code = "invalid-dimension"


class DivergentEnergy(SpeclabError, ValueError):
    code = "divergent-energy"


class InvalidParameter(SpeclabError, ValueError):
    code = "invalid-parameter"


class DegenerateWeight(SpeclabError, ValueError):
    code = "degenerate-weight"


class TruncationError(SpeclabError, ValueError):
    code = "truncation-error"


class InvalidDensity(SpeclabError, ValueError):
    code = "invalid-density"


class UnsupportedIndex(SpeclabError, ValueError):
    code = "unsupported-index"


class SingularPoint(SpeclabError, ValueError):
    code = "singular-point"


class SingularEvaluation(SpeclabError, ValueError):
    code = "singular-evaluation"


class NumericBreakdown(SpeclabError, ArithmeticError):
    code = "numeric-breakdown"
    exit_status = 3


class NoConvergence(SpeclabError, ArithmeticError):
    code = "no-convergence"
    exit_status = 3
