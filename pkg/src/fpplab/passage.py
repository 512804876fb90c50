"""Passage-time laws, non-identical schedules, seeded weight fields, truncation."""
from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, special

from .lattice import Box, axis_site, edge_index, EdgeId

INF = math.inf

# Philox key word 1 layout: stream tag (8 bits) | box radius (24 bits) | replication (32 bits)
STREAM_FIELD = 0
STREAM_PROBE_EDGE = 1
STREAM_PROBE_WEIGHT = 2
STREAM_PATHS = 3


class DistributionError(ValueError):
    pass


class ScheduleError(ValueError):
    """A schedule violates the moment or small-time conditions."""


@dataclass(frozen=True)
class DistributionSpec:
    """One parametric passage-time law.

    Families and parameters:

    - ``shifted-uniform(a, b)``: uniform on ``[a, b]``, ``0 <= a < b``
    - ``shifted-exponential(shift, rate)``: ``shift + Exp(rate)``
    - ``pareto(x_m, shape)``: ``P(t > x) = (x_m / x)^shape`` for ``x >= x_m``
    - ``deterministic(c)``: point mass at ``c``
    - ``bernoulli-mix(lo, hi, p_lo)``: ``lo`` with probability ``p_lo``, else ``hi``
    """

    family: str
    params: tuple[float, ...]

    def __post_init__(self) -> None:
        p = self.params
        arity = _ARITY.get(self.family)
        if arity is None:
            raise DistributionError(f"unknown family {self.family!r}")
        if len(p) != arity:
            raise DistributionError(f"{self.family} takes {arity} parameters, got {len(p)}")
        if not all(math.isfinite(x) for x in p):
            raise DistributionError("parameters must be finite")
        ok = {
            "shifted-uniform": lambda: 0 <= p[0] < p[1],
            "shifted-exponential": lambda: p[0] >= 0 and p[1] > 0,
            "pareto": lambda: p[0] > 0 and p[1] > 0,
            "deterministic": lambda: p[0] >= 0,
            "bernoulli-mix": lambda: 0 < p[0] <= p[1] and 0 <= p[2] <= 1,
        }[self.family]()
        if not ok:
            raise DistributionError(f"invalid parameters for {self}")

    def __str__(self) -> str:
        return f"{self.family}({', '.join(_fmt(x) for x in self.params)})"

    @classmethod
    def parse(cls, text: str) -> DistributionSpec:
        m = re.fullmatch(r"\s*([a-z][a-z-]*)\s*\(([^)]*)\)\s*", text)
        if not m:
            raise DistributionError(f"cannot parse distribution {text!r}")
        args = [a for a in m.group(2).split(",") if a.strip()]
        try:
            params = tuple(float(a) for a in args)
        except ValueError as exc:
            raise DistributionError(f"bad parameter in {text!r}") from exc
        return cls(m.group(1), params)

    # -- analytic quantities --------------------------------------------

    def moment_ceiling(self) -> float:
        """Supremum of q with finite E t^q."""
        return self.params[1] if self.family == "pareto" else INF

    def mean(self) -> float:
        return self.moment(1.0)

    def cdf_below(self, eps: float) -> float:
        """``P(t < eps)``."""
        p = self.params
        f = self.family
        if f == "shifted-uniform":
            a, b = p
            return min(max((eps - a) / (b - a), 0.0), 1.0)
        if f == "shifted-exponential":
            shift, rate = p
            return 0.0 if eps <= shift else -math.expm1(-rate * (eps - shift))
        if f == "pareto":
            xm, shape = p
            return 0.0 if eps <= xm else 1.0 - (xm / eps) ** shape
        if f == "deterministic":
            return 1.0 if p[0] < eps else 0.0
        lo, hi, p_lo = p
        return (p_lo if lo < eps else 0.0) + ((1.0 - p_lo) if hi < eps else 0.0)

    def moment(self, q: float) -> float:
        """Raw moment ``E t^q``; ``inf`` at or beyond the moment ceiling."""
        if q <= 0:
            raise DistributionError("moment order must be positive")
        p = self.params
        f = self.family
        if f == "shifted-uniform":
            a, b = p
            return (b ** (q + 1) - a ** (q + 1)) / ((q + 1) * (b - a))
        if f == "shifted-exponential":
            shift, rate = p
            if shift == 0:
                return math.gamma(q + 1) / rate**q
            # E (shift + X)^q = e^{rate*shift} rate^{-q} Gamma(q+1, rate*shift)
            x = rate * shift
            upper = special.gammaincc(q + 1, x) * math.gamma(q + 1)
            return float(math.exp(x) * upper / rate**q)
        if f == "pareto":
            xm, shape = p
            return INF if q >= shape else shape * xm**q / (shape - q)
        if f == "deterministic":
            return p[0] ** q
        lo, hi, p_lo = p
        return p_lo * lo**q + (1 - p_lo) * hi**q

    def central_moment(self, k: int) -> float:
        """``E (t - E t)^k`` for k in {2, 4}."""
        if k not in (2, 4):
            raise DistributionError("only central moments 2 and 4 are provided")
        if self.moment_ceiling() <= k:
            return INF
        p = self.params
        f = self.family
        if f == "shifted-uniform":
            w = p[1] - p[0]
            return w**2 / 12 if k == 2 else w**4 / 80
        if f == "shifted-exponential":
            r = p[1]
            return 1 / r**2 if k == 2 else 9 / r**4
        if f == "deterministic":
            return 0.0
        if f == "bernoulli-mix":
            lo, hi, p_lo = p
            m = p_lo * lo + (1 - p_lo) * hi
            return p_lo * (lo - m) ** k + (1 - p_lo) * (hi - m) ** k
        # pareto: expand in raw moments
        m1, m2 = self.moment(1), self.moment(2)
        if k == 2:
            return m2 - m1**2
        m3, m4 = self.moment(3), self.moment(4)
        return m4 - 4 * m1 * m3 + 6 * m1**2 * m2 - 3 * m1**4

    def laplace(self, s: float) -> float:
        """``E exp(-s t)`` for ``s >= 0``."""
        p = self.params
        f = self.family
        if f == "shifted-uniform":
            a, b = p
            if s == 0:
                return 1.0
            return math.exp(-s * a) * -math.expm1(-s * (b - a)) / (s * (b - a))
        if f == "shifted-exponential":
            shift, rate = p
            return math.exp(-s * shift) * rate / (rate + s)
        if f == "deterministic":
            return math.exp(-s * p[0])
        if f == "bernoulli-mix":
            lo, hi, p_lo = p
            return p_lo * math.exp(-s * lo) + (1 - p_lo) * math.exp(-s * hi)
        # pareto: shape e^{-s xm} int_0^inf e^{-s xm z} (1+z)^{-shape-1} dz
        xm, shape = p
        c = s * xm
        val, _ = integrate.quad(lambda z: math.exp(-c * z) * (1 + z) ** (-shape - 1),
                                0, INF, epsabs=0.0, epsrel=1e-12, limit=200)
        return shape * math.exp(-c) * val

    def inverse_cdf(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms in (0, 1) to samples."""
        p = self.params
        f = self.family
        if f == "shifted-uniform":
            return p[0] + (p[1] - p[0]) * u
        if f == "shifted-exponential":
            return p[0] - np.log1p(-u) / p[1]
        if f == "pareto":
            return p[0] * (1.0 - u) ** (-1.0 / p[1])
        if f == "deterministic":
            return np.full_like(u, p[0])
        lo, hi, p_lo = p
        return np.where(u < p_lo, lo, hi)


_ARITY = {
    "shifted-uniform": 2,
    "shifted-exponential": 2,
    "pareto": 2,
    "deterministic": 1,
    "bernoulli-mix": 3,
}


def _fmt(x: float) -> str:
    return repr(int(x)) if float(x).is_integer() else repr(x)


RULES = ("constant", "periodic", "coordinate")


@dataclass(frozen=True)
class DistributionSchedule:
    """Assignment edge -> spec.

    ``constant`` uses ``specs[0]`` everywhere.  ``periodic`` gives the edge with
    box index ``i`` the spec ``specs[i % m]``.  ``coordinate`` gives an edge
    with base ``b`` the spec ``specs[sum(b) % m]``.  ``m = len(specs)``.
    """

    specs: tuple[DistributionSpec, ...]
    rule: str = "constant"

    def __post_init__(self) -> None:
        specs = tuple(DistributionSpec.parse(s) if isinstance(s, str) else s for s in self.specs)
        object.__setattr__(self, "specs", specs)
        if not self.specs:
            raise ScheduleError("a schedule needs at least one spec")
        if self.rule not in RULES:
            raise ScheduleError(f"unknown rule {self.rule!r}; expected one of {RULES}")
        if self.rule == "constant" and len(self.specs) != 1:
            raise ScheduleError("constant rule takes exactly one spec")

    @classmethod
    def constant(cls, spec: DistributionSpec | str) -> DistributionSchedule:
        if isinstance(spec, str):
            spec = DistributionSpec.parse(spec)
        return cls((spec,), "constant")

    @property
    def period(self) -> int:
        return len(self.specs)

    def __str__(self) -> str:
        return f"{self.rule}[{'; '.join(str(s) for s in self.specs)}]"

    def digest(self) -> str:
        return hashlib.sha256(str(self).encode()).hexdigest()[:16]

    def spec_ids(self, box: Box) -> np.ndarray:
        """Index into ``specs`` for every edge of ``box``, in edge-index order."""
        topo = box.topology()
        m = self.period
        if self.rule == "constant":
            return np.zeros(topo.num_edges, dtype=np.int64)
        if self.rule == "periodic":
            return np.arange(topo.num_edges, dtype=np.int64) % m
        return topo.coords[topo.edge_base].sum(axis=1) % m

    def spec_for(self, e: EdgeId, box: Box) -> DistributionSpec:
        if self.rule == "constant":
            return self.specs[0]
        if self.rule == "periodic":
            return self.specs[edge_index(e, box) % self.period]
        return self.specs[sum(e.base) % self.period]

    def mean_sup(self) -> float:
        return max(s.mean() for s in self.specs)

    def mean_inf(self) -> float:
        return min(s.mean() for s in self.specs)


def small_time_mass(schedule: DistributionSchedule, eps: float) -> float:
    """``max_i P(t(e_i) < eps)`` over the schedule's distinct specs."""
    if not eps > 0:
        raise DistributionError("eps must be positive")
    return max(s.cdf_below(eps) for s in schedule.specs)


def moment_sup(schedule: DistributionSchedule, q: float) -> float:
    if not q > 0:
        raise DistributionError("moment order must be positive")
    return max(s.moment(q) for s in schedule.specs)


@dataclass(frozen=True)
class ValidationReport:
    d: int
    eta: float
    moment_order: float
    moment_sup: float
    mean_sup: float
    mean_inf: float
    small_time_masses: tuple[tuple[float, float], ...]
    problems: tuple[str, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return not self.problems


EPS_GRID = tuple(10.0**-j for j in range(1, 7))


def validate_schedule(schedule: DistributionSchedule, d: int, eta: float) -> ValidationReport:
    """Check the small-time and moment conditions for dimension ``d``."""
    if eta <= 0:
        raise ScheduleError("eta must be positive")
    q = 6 * (1 + d) + eta
    problems = []
    msup = moment_sup(schedule, q)
    if not math.isfinite(msup):
        problems.append(f"moment of order {q:g} is infinite for some spec")
    mean_sup, mean_inf = schedule.mean_sup(), schedule.mean_inf()
    if not mean_inf > 0:
        problems.append("inf of E t over specs is not positive")
    masses = tuple((eps, small_time_mass(schedule, eps)) for eps in EPS_GRID)
    values = [m for _, m in masses]
    if any(b > a for a, b in zip(values, values[1:])):
        problems.append("small-time mass is not monotone on the eps grid")
    # a point mass at 0 is the only way the mass fails to vanish for these families
    if any(s.family == "deterministic" and s.params[0] == 0 for s in schedule.specs):
        problems.append("some spec has an atom at 0, so P(t < eps) does not vanish")
    return ValidationReport(d, eta, q, msup, mean_sup, mean_inf, masses, tuple(problems))


def check_schedule(schedule: DistributionSchedule, d: int, eta: float) -> ValidationReport:
    report = validate_schedule(schedule, d, eta)
    if not report.ok:
        raise ScheduleError("; ".join(report.problems))
    return report


# -- random streams -------------------------------------------------------

def stream_key(master_seed: int, tag: int, radius: int, replication: int) -> tuple[int, int]:
    if not 0 <= tag < 256 or not 0 <= radius < 2**24 or not 0 <= replication < 2**32:
        raise ValueError("stream key component out of range")
    return master_seed % 2**64, (tag << 56) | (radius << 32) | replication


def uniforms(key: tuple[int, int], count: int) -> np.ndarray:
    """The first ``count`` outputs of Philox4x64-10 under ``key`` mapped into (0, 1).

    Draw ``i`` is the ``i``-th 64-bit word, so edge ``i`` always receives the same
    value no matter how many edges are drawn or in which order they are used.
    """
    bitgen = np.random.Philox(key=np.array(key, dtype=np.uint64))
    raw = bitgen.random_raw(count)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


@dataclass(frozen=True, eq=False)
class WeightField:
    box: Box
    weights: np.ndarray
    seed_info: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.shape != (self.box.num_edges,):
            raise ValueError(f"expected {self.box.num_edges} weights, got shape {w.shape}")
        if w is self.weights:
            w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __getitem__(self, e: EdgeId) -> float:
        return float(self.weights[edge_index(e, self.box)])

    def replace(self, index: int, value: float) -> WeightField:
        w = self.weights.copy()
        w[index] = value
        return WeightField(self.box, w, self.seed_info)

    def digest(self) -> str:
        return hashlib.sha256(self.weights.astype("<f8").tobytes()).hexdigest()


def sample_field(schedule: DistributionSchedule, box: Box, master_seed: int,
                 replication: int) -> WeightField:
    u = uniforms(stream_key(master_seed, STREAM_FIELD, box.radius, replication), box.num_edges)
    ids = schedule.spec_ids(box)
    w = np.empty_like(u)
    for k, spec in enumerate(schedule.specs):
        m = ids == k
        w[m] = spec.inverse_cdf(u[m])
    return WeightField(box, w, (master_seed, replication))


def resample_edge(schedule: DistributionSchedule, field: WeightField, index: int,
                  master_seed: int, probe: int) -> float:
    """A fresh independent draw for one edge, from the probe stream."""
    key = stream_key(master_seed, STREAM_PROBE_WEIGHT, field.box.radius, probe)
    u = uniforms(key, 1)
    spec = schedule.specs[int(schedule.spec_ids(field.box)[index])]
    return float(spec.inverse_cdf(u)[0])


def truncation_cap(n: int, alpha: float) -> float:
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0 < alpha < 1 / 6:
        raise ValueError(f"alpha must lie in (0, 1/6), got {alpha}")
    return float(n) ** alpha


def truncate_field(w: WeightField, n: int, alpha: float) -> WeightField:
    """Weights replaced by ``min(weight, n**alpha)``."""
    cap = truncation_cap(n, alpha)
    return WeightField(w.box, np.minimum(w.weights, cap), w.seed_info)


def axis_edge_indices(box: Box, count: int) -> np.ndarray:
    """Box indices of the axis edges f_1..f_count, f_i joining (i-1, 0) and (i, 0)."""
    if count > box.radius:
        raise ValueError(f"B_{box.radius} does not contain f_1..f_{count}")
    return np.array([edge_index(EdgeId(axis_site(i - 1, box.d), 0), box)
                     for i in range(1, count + 1)], dtype=np.int64)


def sample_path_times(schedule: DistributionSchedule, k: int, count: int,
                      master_seed: int, d: int = 2) -> np.ndarray:
    """Passage times of the fixed straight k-edge path f_1..f_k, ``count`` times.

    Each repetition draws fresh independent weights for the path's edges.
    """
    box = Box(k, d)
    ids = schedule.spec_ids(box)[axis_edge_indices(box, k)]
    u = uniforms(stream_key(master_seed, STREAM_PATHS, k, 0), k * count).reshape(count, k)
    w = np.empty_like(u)
    for j in range(k):
        w[:, j] = schedule.specs[int(ids[j])].inverse_cdf(u[:, j])
    total = np.zeros(count)
    for j in range(k):
        total = total + w[:, j]
    return total


def axis_spec_ids(schedule: DistributionSchedule, count: int, d: int = 2,
                  box: Box | None = None) -> np.ndarray:
    """Spec index of f_1..f_count.  Only the periodic rule needs the box."""
    i = np.arange(count, dtype=np.int64)
    if schedule.rule == "constant":
        return np.zeros(count, dtype=np.int64)
    if schedule.rule == "coordinate":
        return i % schedule.period
    box = box or Box(count, d)
    return schedule.spec_ids(box)[axis_edge_indices(box, count)]


def parse_specs(text: str | Sequence[str]) -> tuple[DistributionSpec, ...]:
    parts = text.split(";") if isinstance(text, str) else list(text)
    return tuple(DistributionSpec.parse(p) for p in parts if p.strip())
