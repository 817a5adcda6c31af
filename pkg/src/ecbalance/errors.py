"""Exception hierarchy.

Every error raised by the library derives from :class:`EcBalanceError`.
The three top-level families map onto CLI exit codes: data problems (2),
model/estimation problems (3) and I/O problems (4).
"""


class EcBalanceError(Exception):
    exit_code = 1


class DataError(EcBalanceError, ValueError):
    exit_code = 2


class ModelError(EcBalanceError, RuntimeError):
    exit_code = 3


class IoError(EcBalanceError, OSError):
    exit_code = 4


# -- data ------------------------------------------------------------------

class EmptyInput(DataError):
    pass


class InconsistentDimension(DataError):
    pass


class EcTreatedSubject(DataError):
    pass


class DegenerateArms(DataError):
    pass


class MissingColumn(DataError):
    pass


class ParseError(DataError):
    def __init__(self, row, column, detail=""):
        self.row = row
        self.column = column
        msg = f"cannot parse row {row}, column {column!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class DimensionMismatch(DataError):
    pass


class EmptyGroup(DataError):
    pass


class InvalidFilterId(DataError):
    pass


class InvalidLambda(DataError):
    pass


class MissingOracleEntry(DataError):
    pass


# -- model -----------------------------------------------------------------

class SingularDesign(ModelError):
    pass


class Separation(ModelError):
    pass


class NoConvergence(ModelError):
    def __init__(self, iterations, max_abs_score=float("nan")):
        self.iterations = iterations
        self.max_abs_score = max_abs_score
        super().__init__(
            f"IRLS did not converge in {iterations} iterations "
            f"(max |score| = {max_abs_score:.3g})"
        )


class DegeneratePi(ModelError):
    pass


class AllZeroWeights(ModelError):
    pass


class EmptyWeightedGroup(ModelError):
    pass
