"""Well-behaved error-probability functions and their closed-form inversions.

A model supplies p(mu, delta), an upper bound on Pr[|X - mu| > delta*mu] for
the sums of bounded per-item contributions that sampling estimates reduce
to.  Values above 1 are allowed (they are simply uninformative).  The
inverse delta(mu, P) solves p(mu, delta) = P in the second argument.

Well-behavedness means: (a) p is continuous and strictly decreasing in both
arguments; (b) shrinking the mean while keeping the absolute error
mu*delta at least as large strictly shrinks p; (c) below the model constant
``p_c``, p falls at least proportionally to mu*delta^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

__all__ = [
    "DomainError",
    "DegenerateMassError",
    "ErrorModel",
    "Chebyshev",
    "ChernoffBounded",
    "FourthMoment",
    "get_model",
    "MODEL_NAMES",
    "check_well_behaved",
    "WellBehavedViolation",
]


class DomainError(ValueError):
    """Inputs fall outside the validity region of an error model."""


class DegenerateMassError(ValueError):
    """No variable mass (mu = 0): the estimate is exact, nothing to invert."""


class ErrorModel:
    name: str = "?"
    p_c: float = 1.0  # threshold constant for the proportional-fall property

    def p_of(self, mu: float, delta: float) -> float:
        """Error-probability bound at mean `mu` and relative error `delta`."""
        raise NotImplementedError

    def delta_of(self, mu: float, p: float) -> float:
        """Closed-form inverse of ``p_of`` in delta at level `p`.

        The result is not clamped into the model's validity region; callers
        decide what to do with out-of-domain solutions (see ``in_domain``).
        """
        raise NotImplementedError

    def in_domain(self, mu: float, delta: float) -> bool:
        """Whether (mu, delta) lies in the model's validity region."""
        return True

    @staticmethod
    def _check_mu_delta(mu: float, delta: float) -> None:
        if mu == 0:
            raise DegenerateMassError("mu = 0: no variable mass, estimate is exact")
        if mu < 0:
            raise DomainError("mu must be positive")
        if delta <= 0:
            raise DomainError("delta must be positive")

    @staticmethod
    def _check_mu_p(mu: float, p: float) -> None:
        if mu == 0:
            raise DegenerateMassError("mu = 0: no variable mass, estimate is exact")
        if mu < 0:
            raise DomainError("mu must be nonnegative")
        if not 0 < p <= 1:
            raise DomainError("target error probability must lie in (0, 1]")

    def __repr__(self) -> str:  # pragma: no cover
        return f"<ErrorModel {self.name}>"


class Chebyshev(ErrorModel):
    """p(mu, delta) = 1 / (delta^2 * mu); valid whenever 2-independence holds."""

    name = "chebyshev"
    p_c = 1.0

    def p_of(self, mu: float, delta: float) -> float:
        self._check_mu_delta(mu, delta)
        return 1.0 / (delta * delta * mu)

    def delta_of(self, mu: float, p: float) -> float:
        self._check_mu_p(mu, p)
        return 1.0 / math.sqrt(p * mu)


class ChernoffBounded(ErrorModel):
    """p(mu, delta) = 2*exp(-delta^2*mu/3), valid only for delta <= 1."""

    name = "chernoff"
    p_c = 2.0 / math.e

    def p_of(self, mu: float, delta: float) -> float:
        self._check_mu_delta(mu, delta)
        if delta > 1.0:
            raise DomainError("the bounded Chernoff model requires delta <= 1")
        return 2.0 * math.exp(-delta * delta * mu / 3.0)

    def delta_of(self, mu: float, p: float) -> float:
        self._check_mu_p(mu, p)
        return math.sqrt(3.0 * math.log(2.0 / p) / mu)

    def in_domain(self, mu: float, delta: float) -> bool:
        return delta <= 1.0


class FourthMoment(ErrorModel):
    """p(mu, delta) = (2 / (mu*delta^2))^2, valid for mu >= 1.

    For mu >= 1 this dominates the raw fourth-moment bound
    (mu + 3*mu^2) / (delta*mu)^4 available under 4-independence.
    """

    name = "moment4"
    p_c = 1.0

    def p_of(self, mu: float, delta: float) -> float:
        self._check_mu_delta(mu, delta)
        if mu < 1.0:
            raise DomainError("the fourth-moment model requires mu >= 1")
        r = 2.0 / (mu * delta * delta)
        return r * r

    def delta_of(self, mu: float, p: float) -> float:
        self._check_mu_p(mu, p)
        return math.sqrt(2.0 / (mu * math.sqrt(p)))

    def in_domain(self, mu: float, delta: float) -> bool:
        return mu >= 1.0


_MODELS = {m.name: m for m in (Chebyshev(), ChernoffBounded(), FourthMoment())}
MODEL_NAMES = tuple(_MODELS)


def get_model(name: str) -> ErrorModel:
    try:
        return _MODELS[name]
    except KeyError:
        raise ValueError(
            f"unknown error model {name!r}; choose from {', '.join(MODEL_NAMES)}"
        ) from None


@dataclass(frozen=True)
class WellBehavedViolation:
    condition: str  # 'a-mu', 'a-delta', 'b', or 'c'
    point_a: tuple[float, float]
    point_b: tuple[float, float]
    detail: str


def check_well_behaved(
    model: ErrorModel,
    mus: Sequence[float],
    deltas: Sequence[float],
    rtol: float = 1e-12,
) -> list[WellBehavedViolation]:
    """Check conditions (a), (b) and the proportional-fall inequality (c) on a grid.

    The grid must lie inside the model's validity domain.  Returns the list
    of violated pairs; an empty list means the model behaved on this grid.
    """
    pts = [(mu, d) for mu in mus for d in deltas]
    for mu, d in pts:
        if not model.in_domain(mu, d):
            raise DomainError(f"grid point (mu={mu}, delta={d}) outside validity domain")
    vals = {pt: model.p_of(*pt) for pt in pts}
    violations: list[WellBehavedViolation] = []

    # (a) strict monotonicity along both axes.
    for mu in mus:
        for d1, d2 in zip(sorted(deltas), sorted(deltas)[1:]):
            if not vals[(mu, d2)] < vals[(mu, d1)]:
                violations.append(
                    WellBehavedViolation("a-delta", (mu, d1), (mu, d2), "not decreasing in delta")
                )
    for d in deltas:
        for m1, m2 in zip(sorted(mus), sorted(mus)[1:]):
            if not vals[(m2, d)] < vals[(m1, d)]:
                violations.append(
                    WellBehavedViolation("a-mu", (m1, d), (m2, d), "not decreasing in mu")
                )

    # (b) smaller mean with at least the same absolute error -> smaller p.
    for pa in pts:
        for pb in pts:
            mu_a, d_a = pa
            mu_b, d_b = pb
            if mu_a < mu_b and mu_a * d_a >= mu_b * d_b:
                if not vals[pa] < vals[pb]:
                    violations.append(
                        WellBehavedViolation("b", pa, pb, "p did not drop with smaller mean")
                    )

    # (c) proportional fall below p_c.
    for pa in pts:
        mu_a, d_a = pa
        if d_a > 1.0 or vals[pa] >= model.p_c:
            continue
        s_a = mu_a * d_a * d_a
        for pb in pts:
            mu_b, d_b = pb
            if d_b > 1.0:
                continue
            s_b = mu_b * d_b * d_b
            if s_a < s_b:
                lhs = vals[pa]
                rhs = (s_a / s_b) * vals[pb]
                if lhs < rhs * (1.0 - rtol):
                    violations.append(
                        WellBehavedViolation("c", pa, pb, f"fall slower than mu*delta^2 ({lhs} < {rhs})")
                    )
    return violations
