"""Exception hierarchy.

Argument problems subclass ``ValueError``; failures that come from the
numbers themselves (singular blocks, non-PSD models) subclass
``NumericalError``. The CLI maps the two families to exit codes 1 and 2.
"""

from __future__ import annotations


class NumericalError(ArithmeticError):
    """Base class for failures caused by the numerical content of the input."""


class FactorizationError(NumericalError):
    def __init__(self, shape: tuple[int, ...], reason: str = "did not converge"):
        self.shape = tuple(shape)
        super().__init__(f"factorization of {self.shape[0]}x{self.shape[1]} matrix {reason}")


class SingularMatrixError(NumericalError):
    def __init__(self, min_eigenvalue: float, ridge_tol: float, what: str = "matrix"):
        self.min_eigenvalue = float(min_eigenvalue)
        self.ridge_tol = float(ridge_tol)
        super().__init__(
            f"{what} is numerically singular: min eigenvalue {self.min_eigenvalue:.3e} "
            f"< tolerance {self.ridge_tol:.3e} (sample size too small for the support?)"
        )


class SupportConditioningError(SingularMatrixError):
    def __init__(self, support_u, support_v, min_eigenvalue: float, ridge_tol: float):
        self.support_u = tuple(int(i) for i in support_u)
        self.support_v = tuple(int(j) for j in support_v)
        super().__init__(
            min_eigenvalue,
            ridge_tol,
            what=f"covariance submatrix on supports I={self.support_u}, J={self.support_v}",
        )


class ModelConstructionError(NumericalError):
    pass


class DegenerateModelError(NumericalError):
    pass


class EstimationFailure(NumericalError):
    pass


class EnumerationBudgetError(ValueError):
    def __init__(self, required: int, budget: int):
        self.required = int(required)
        self.budget = int(budget)
        super().__init__(
            f"support enumeration needs {self.required} subproblems, budget is {self.budget}"
        )
