"""Small closed-form problems for tests, demos, and the CLI toy runner."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    BlockIndex,
    InvalidArgumentError,
    ObjectiveOracle,
    Point,
    make_block_structure,
)
from .surrogates import (
    ConvexPartOracle,
    DcLinearization,
    ExactBlockSurrogate,
    LipschitzQuadraticSurrogate,
    ProximalSurrogate,
    soft_threshold,
)

__all__ = [
    "QuadraticProblem",
    "separable_quartic_dc",
    "lasso_problem",
    "AffineLogdetSurrogate",
    "affine_logdet_family",
]


@dataclass(frozen=True)
class QuadraticProblem:
    """f(x) = 0.5 x'Qx - b'x with Q symmetric positive definite."""

    Q: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or b.shape != (Q.shape[0],):
            raise InvalidArgumentError("Q must be square and b must match it")
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise InvalidArgumentError("Q must be symmetric")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "b", b)

    def objective(self) -> ObjectiveOracle:
        return ObjectiveOracle(
            value=lambda x: 0.5 * float(x @ self.Q @ x) - float(self.b @ x),
            gradient=lambda x: self.Q @ x - self.b,
        )

    def minimizer(self) -> np.ndarray:
        return np.linalg.solve(self.Q, self.b)

    def block_minimize(self, part: BlockIndex, anchor: Point) -> np.ndarray:
        # Exact part minimizer with the rest frozen: Q_pp x_p = b_p - Q_pr y_r.
        idx = anchor.structure.part_indices(part)
        rest = np.setdiff1d(np.arange(anchor.dim), idx)
        rhs = self.b[idx] - self.Q[np.ix_(idx, rest)] @ anchor.values[rest]
        return np.linalg.solve(self.Q[np.ix_(idx, idx)], rhs)

    def prox_block_minimize(self, part: BlockIndex, anchor: Point, c: float) -> np.ndarray:
        idx = anchor.structure.part_indices(part)
        rest = np.setdiff1d(np.arange(anchor.dim), idx)
        rhs = (self.b[idx] - self.Q[np.ix_(idx, rest)] @ anchor.values[rest]
               + anchor.values[idx] / c)
        lhs = self.Q[np.ix_(idx, idx)] + np.eye(idx.size) / c
        return np.linalg.solve(lhs, rhs)

    def exact_surrogate(self) -> ExactBlockSurrogate:
        return ExactBlockSurrogate(self.objective(), self.block_minimize)

    def proximal_surrogate(self, c=1.0) -> ProximalSurrogate:
        return ProximalSurrogate(self.objective(), self.prox_block_minimize, c=c)


def separable_quartic_dc(dims=(1,)) -> tuple[ObjectiveOracle, DcLinearization, Point]:
    """f(x) = sum x^4/4 - x^2/2, split as convex quartic plus concave quadratic.

    The linearized subproblem solves componentwise x^3 = -a, so each
    whole-variable step is a cube root of the anchor. Returns the objective,
    the linearization surrogate, and a zero starting point.
    """
    structure = make_block_structure(dims)

    def f_value(x):
        return float(np.sum(x ** 4) / 4.0 - np.sum(x ** 2) / 2.0)

    def f_grad(x):
        return x ** 3 - x

    cvx = ConvexPartOracle(
        value=lambda x: float(np.sum(x ** 4) / 4.0),
        minimize_linear=lambda a: np.cbrt(-a),
    )
    dc = DcLinearization(
        f_cvx=cvx,
        cve_value=lambda x: -float(np.sum(x ** 2) / 2.0),
        cve_grad=lambda x: -x,
        block_minimize_linear=lambda part, a, anchor: np.cbrt(-a),
    )
    objective = ObjectiveOracle(value=f_value, gradient=f_grad)
    return objective, dc, Point(np.zeros(structure.total), structure)


def lasso_problem(target, weight: float = 1.0, gamma: float = 1.0,
                  dims=None) -> tuple[ObjectiveOracle, LipschitzQuadraticSurrogate, Point]:
    """f(x) = weight * |x|_1 + 0.5 |x - target|^2 (smooth gradient modulus 1).

    Returns the objective, the proximal-gradient surrogate with the given
    step gamma, and a zero starting point.
    """
    target = np.asarray(target, dtype=np.float64).ravel()
    if weight < 0:
        raise InvalidArgumentError("weight must be nonnegative")
    structure = make_block_structure(dims if dims is not None else [target.size])
    if structure.total != target.size:
        raise InvalidArgumentError("dims must cover the target vector")

    smooth = ObjectiveOracle(
        value=lambda x: 0.5 * float(np.sum((x - target) ** 2)),
        gradient=lambda x: x - target,
    )
    surrogate = LipschitzQuadraticSurrogate(
        smooth=smooth,
        nonsmooth_total=lambda x: weight * float(np.sum(np.abs(x))),
        prox=lambda part, v, g: soft_threshold(v, weight * g),
        beta=1.0,
        gamma=gamma,
    )
    return surrogate.objective(), surrogate, Point(np.zeros(structure.total), structure)


@dataclass(frozen=True)
class AffineLogdetSurrogate:
    """Tangent bound of logdet along an affine positive definite family.

    E(x) = base + sum_k x_k coeffs[k]; since logdet is concave in E and E is
    affine in x, linearizing at the anchor dominates f(x) = logdet E(x).
    """

    base: np.ndarray
    coeffs: tuple[np.ndarray, ...]

    def matrix(self, x: np.ndarray) -> np.ndarray:
        e = self.base.copy()
        for xk, ck in zip(np.asarray(x, dtype=np.float64), self.coeffs):
            e = e + xk * ck
        return e

    def _logdet(self, e: np.ndarray) -> float:
        sign, val = np.linalg.slogdet(e)
        if sign <= 0:
            raise InvalidArgumentError("matrix family left the positive definite cone")
        return float(val)

    def value(self, part: BlockIndex, xi: np.ndarray, anchor: Point, iteration: int = 1) -> float:
        z = anchor.with_part(part, xi)
        e = self.matrix(z.values)
        e_hat = self.matrix(anchor.values)
        base = self._logdet(e_hat)
        return base + float(np.trace(np.linalg.solve(e_hat, e - e_hat)))

    def minimize(self, part: BlockIndex, anchor: Point, iteration: int = 1) -> tuple[np.ndarray, float]:
        # Linear in x over a box; demo family minimizes at the lower corner.
        raise InvalidArgumentError("linear model has no interior minimizer; "
                                   "this surrogate is for evaluation checks")


def affine_logdet_family():
    """Demo instance of the logdet tangent bound plus its objective and box.

    Returns (objective, surrogate, sample space) where the sample space
    draws coordinates from [0, 2], keeping the family positive definite.
    """
    from .verify import SampleSpace
    from . import core

    base = np.eye(2)
    coeffs = (
        np.array([[1.0, 0.3], [0.3, 0.5]]),
        np.array([[0.5, -0.2], [-0.2, 1.0]]),
    )
    surrogate = AffineLogdetSurrogate(base=base, coeffs=coeffs)
    structure = make_block_structure([1, 1])

    def f_value(x):
        return surrogate._logdet(surrogate.matrix(x))

    space = SampleSpace(
        structure=structure,
        feasible=(core.box([0.0], [2.0]), core.box([0.0], [2.0])),
        lo=0.0, hi=2.0)
    return ObjectiveOracle(value=f_value), surrogate, space
