"""Closed-form constants and tail bounds derived from a schedule.

Every constructor re-checks the inequality that defines its output before
returning, so a returned certificate is never stale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .lattice import Box, edge_count
from .passage import (
    DistributionSchedule,
    axis_spec_ids,
    moment_sup,
    small_time_mass,
)

EPS_GRID = tuple(2.0**-j for j in range(1, 41))


class BoundError(ValueError):
    pass


class ChernoffError(BoundError):
    """No admissible epsilon on the grid; the schedule puts too much mass near 0."""


@dataclass(frozen=True)
class ChernoffCertificate:
    d: int
    eps: float
    s: float
    beta1: float
    small_mass: float
    mgf_sup: float
    rate: float  # -(s*beta1 + log mgf_sup); the certified per-edge exponent
    mean_inf: float

    def checks(self) -> dict[str, bool]:
        half = math.exp(-6 * self.d) / 2
        return {
            "small_mass <= exp(-6d)/2": self.small_mass <= half,
            "exp(-s*eps) <= exp(-6d)/2": math.exp(-self.s * self.eps) <= half,
            "exp(s*beta1) * mgf_sup <= exp(-d)": self.rate >= self.d,
            "0 < beta1 < inf E t": 0 < self.beta1 < self.mean_inf,
        }

    def verify(self) -> None:
        failed = [k for k, ok in self.checks().items() if not ok]
        if failed:
            raise ChernoffError(f"certificate inequalities fail: {failed}")

    def path_bound(self, k: int) -> float:
        """Certified ``P(T(pi) <= beta1 k)`` bound for a fixed k-edge path."""
        return math.exp(-self.rate * k)


def derive_chernoff(schedule: DistributionSchedule, d: int) -> ChernoffCertificate:
    if d < 2:
        raise BoundError("d must be at least 2")
    half = math.exp(-6 * d) / 2
    eps = next((e for e in EPS_GRID if small_time_mass(schedule, e) <= half), None)
    if eps is None:
        raise ChernoffError(
            f"small_time_mass(2^-40) = {small_time_mass(schedule, EPS_GRID[-1]):.3e} "
            f"exceeds exp(-6d)/2 = {half:.3e}; no admissible eps on the grid")
    mass = small_time_mass(schedule, eps)
    # smallest s with exp(-s eps) <= exp(-6d)/2
    s = (6 * d + math.log(2)) / eps
    while mass + math.exp(-s * eps) > math.exp(-3 * d):
        s *= 2
    mean_inf = schedule.mean_inf()
    beta1 = min(d / s, 0.99 * mean_inf)
    mgf = max(spec.laplace(s) for spec in schedule.specs)
    rate = -(s * beta1 + math.log(mgf)) if mgf > 0 else math.inf
    cert = ChernoffCertificate(d, eps, s, beta1, mass, mgf, rate, mean_inf)
    cert.verify()
    return cert


def delta(d: int) -> float:
    """``d - log(2d)``, positive for every d >= 2."""
    return d - math.log(2 * d)


def long_path_threshold(beta1: float, mu_sup: float, k: int) -> int:
    """Smallest integer r with ``r >= 8 mu k / beta1``, in exact arithmetic on the floats."""
    return math.ceil(Fraction(8) * Fraction(mu_sup) * k / Fraction(beta1))


def ek_tail(beta1: float, mu_sup: float, d: int, k: int) -> float:
    """Geometric-series bound on P(E_k): sum over r >= r0 of exp(-delta r)."""
    if not beta1 > 0 or mu_sup < beta1 or k < 1:
        raise BoundError("need beta1 > 0, mu_sup >= beta1, k >= 1")
    dl = delta(d)
    r0 = long_path_threshold(beta1, mu_sup, k)
    return math.exp(-dl * r0) / -math.expm1(-dl)


def an_moments(schedule: DistributionSchedule, n: int, d: int = 2,
               box: Box | None = None) -> tuple[float, float]:
    """``E(sum X_i)^4`` over the 2n axis edges, and the mean used for mu."""
    ids = axis_spec_ids(schedule, 2 * n, d, box)
    v = [schedule.specs[int(i)].central_moment(2) for i in ids]
    m4 = [schedule.specs[int(i)].central_moment(4) for i in ids]
    if not all(math.isfinite(x) for x in m4):
        raise BoundError("an axis-edge spec has no finite 4th moment")
    sv = math.fsum(v)
    sum_v2 = math.fsum(x * x for x in v)
    # E(sum X)^4 = sum E X^4 + 3 sum_{i != j} E X_i^2 E X_j^2 for independent centred X
    fourth = math.fsum(m4) + 3 * (sv * sv - sum_v2)
    return fourth, schedule.mean_sup()


def an_bound(schedule: DistributionSchedule, n: int, d: int = 2, box: Box | None = None) -> float:
    """Markov bound on ``P(sum_{i<=2n} t(f_i) > 6 mu n)`` via the 4th central moment."""
    if n < 1:
        raise BoundError("n must be at least 1")
    fourth, mu = an_moments(schedule, n, d, box)
    return fourth / (4 * mu * n) ** 4


def choose_alpha_K(d: int, eta: float) -> tuple[float, float]:
    if d < 2 or not eta > 0:
        raise BoundError("need d >= 2 and eta > 0")
    K = 6 * (1 + d) + eta / 2
    lo = (1 + d) / K
    alpha = (lo + 1 / 6) / 2
    if not (alpha < 1 / 6 and 6 * (1 + d) < K < 6 * (1 + d) + eta and K * alpha > 1 + d):
        raise BoundError(f"alpha={alpha}, K={K} violate their constraints")
    return alpha, K


def gn_bound(schedule: DistributionSchedule, d: int, alpha: float, K: float, n: int,
             box_factor: float) -> float:
    """Union + Markov bound on P(some edge of B_ceil(box_factor n) has t >= n^alpha)."""
    mk = moment_sup(schedule, K)
    if not math.isfinite(mk):
        raise BoundError(f"moment of order {K} is infinite")
    radius = math.ceil(box_factor * n)
    return edge_count(radius, d) * float(n) ** (-K * alpha) * mk


def lemma_variance_bound(n: int, alpha: float, mean_path_len: float) -> float:
    """``4 n^(2 alpha) E(#pi_n)``."""
    if mean_path_len < n:
        raise BoundError("a path to distance n has at least n edges")
    return 4 * float(n) ** (2 * alpha) * mean_path_len


@dataclass(frozen=True)
class BoundReport:
    d: int
    eta: float
    schedule: str
    schedule_digest: str
    delta: float
    beta2: float
    C: float
    an_C1: float
    gn_exponent: float
    alpha: float
    K: float
    box_factor: float
    chernoff: ChernoffCertificate
    curves: list[dict[str, float]] = field(default_factory=list)

    def checks(self) -> dict[str, bool]:
        out = {f"chernoff: {k}": v for k, v in self.chernoff.checks().items()}
        out["delta > 0"] = self.delta > 0
        out["alpha < 1/6"] = self.alpha < 1 / 6
        out["6(1+d) < K < 6(1+d)+eta"] = 6 * (1 + self.d) < self.K < 6 * (1 + self.d) + self.eta
        out["K*alpha > 1+d"] = self.K * self.alpha > 1 + self.d
        return out

    def fields(self) -> dict[str, float | int | str]:
        c = self.chernoff
        return {
            "d": self.d, "eta": self.eta, "schedule": self.schedule,
            "schedule_digest": self.schedule_digest,
            "delta": self.delta, "beta1": c.beta1, "s": c.s, "eps": c.eps,
            "mgf_sup": c.mgf_sup, "rate": c.rate, "beta2": self.beta2, "C": self.C,
            "an_C1": self.an_C1, "gn_exponent": self.gn_exponent,
            "alpha": self.alpha, "K": self.K, "box_factor": self.box_factor,
        }


def bound_report(schedule: DistributionSchedule, d: int, eta: float,
                 alpha: float | None = None, box_factor: float | None = None,
                 n_values: tuple[int, ...] = (8, 16, 32, 64, 128)) -> BoundReport:
    """Derive every constant for ``schedule`` in dimension ``d``.

    ``alpha`` and ``box_factor`` default to the automatic choices
    (midpoint alpha from :func:`choose_alpha_K`; box factor ``8 mu / beta1``).
    """
    cert = derive_chernoff(schedule, d)
    a_auto, K = choose_alpha_K(d, eta)
    alpha = a_auto if alpha is None else alpha
    if not 0 < alpha < 1 / 6:
        raise BoundError("alpha must lie in (0, 1/6)")
    mu = schedule.mean_sup()
    if box_factor is None:
        box_factor = 8 * mu / cert.beta1
    dl = delta(d)
    curves = []
    an_c1 = 0.0
    for n in n_values:
        an = an_bound(schedule, n, d)
        an_c1 = max(an_c1, an * n * n)
        curves.append({
            "n": n,
            "ek_tail": ek_tail(cert.beta1, mu, d, n),
            "an_bound": an,
            "gn_bound": gn_bound(schedule, d, alpha, K, n, box_factor),
            "lemma_rate": float(n) ** (1 + 3 * alpha),
        })
    return BoundReport(
        d=d, eta=eta, schedule=str(schedule), schedule_digest=schedule.digest(),
        delta=dl, beta2=dl * 8 * mu / cert.beta1, C=1 / -math.expm1(-dl),
        an_C1=an_c1, gn_exponent=d - K * alpha, alpha=alpha, K=K,
        box_factor=box_factor, chernoff=cert, curves=curves,
    )
