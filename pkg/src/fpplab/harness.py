"""Seeded Monte Carlo experiments over an n-grid.

A work unit is one ``(n, replication)`` pair.  Its field is drawn from the
stream keyed by ``(master_seed, box radius, replication)`` so units can run in
any order on any number of workers; records are sorted by ``(n, rep)`` before
anything is aggregated or written.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

from . import bounds
from .geodesic import GeodesicSolve
from .lattice import Box, axis_site, edge_count, edge_index
from .passage import (
    STREAM_PROBE_EDGE,
    DistributionSchedule,
    axis_edge_indices,
    check_schedule,
    resample_edge,
    sample_field,
    stream_key,
    truncate_field,
    truncation_cap,
    uniforms,
)
from .records import canonical_json, csv_body, read_artifact, render_artifact, sha256_text
from .stats import Frequency, Moments, PowerFit, loglog_fit, moments

BYTES_PER_EDGE = 160  # weights, CSR copies, tight masks and scipy workspace, measured


class ConfigError(ValueError):
    pass


class ResourceRefusal(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    schedule: DistributionSchedule
    d: int = 2
    n_grid: tuple[int, ...] = (8, 16, 32, 64)
    replications: int = 200
    eta: float = 0.5
    alpha: float | str = "auto"
    box_factor: float | str = 2.0
    master_seed: int = 20240611
    outputs: str = "fpp-out"
    max_edges: int = 20_000_000
    subseq_eps: float = 0.05

    def __post_init__(self) -> None:
        if self.d < 2:
            raise ConfigError("d must be at least 2")
        if not self.n_grid or any(n < 1 for n in self.n_grid):
            raise ConfigError("n_grid must be a non-empty list of positive integers")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigError("n_grid must be strictly increasing")
        if self.replications < 2:
            raise ConfigError("replications must be at least 2 (variance is undefined otherwise)")
        if not self.eta > 0:
            raise ConfigError("eta must be positive")
        if self.alpha != "auto" and not (isinstance(self.alpha, float) and 0 < self.alpha < 1 / 6):
            raise ConfigError("alpha must be 'auto' or a number in (0, 1/6)")
        if self.box_factor != "auto" and not (isinstance(self.box_factor, float)
                                              and self.box_factor >= 2):
            raise ConfigError("box_factor must be 'auto' or a number >= 2 "
                              "(the axis edges f_1..f_2n must lie in the box)")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        if not self.subseq_eps > 0:
            raise ConfigError("subseq_eps must be positive")

    def as_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "outputs"}
        out["schedule"] = {"rule": self.schedule.rule,
                           "specs": [str(s) for s in self.schedule.specs]}
        out["n_grid"] = list(self.n_grid)
        return out

    def digest(self) -> str:
        return sha256_text(canonical_json(self.as_dict()))[:16]


@dataclass(frozen=True)
class Resolved:
    alpha: float
    K: float
    beta1: float
    box_factor: float
    mu_sup: float
    radii: dict[int, int]

    def header(self) -> dict:
        return {"alpha": self.alpha, "K": self.K, "beta1": self.beta1,
                "box_factor": self.box_factor, "mu_sup": self.mu_sup}


def resolve(cfg: ExperimentConfig) -> Resolved:
    """Fix every 'auto' value and refuse boxes that will not fit in memory."""
    check_schedule(cfg.schedule, cfg.d, cfg.eta)
    cert = bounds.derive_chernoff(cfg.schedule, cfg.d)
    alpha_auto, K = bounds.choose_alpha_K(cfg.d, cfg.eta)
    alpha = alpha_auto if cfg.alpha == "auto" else float(cfg.alpha)
    mu = cfg.schedule.mean_sup()
    bf = 8 * mu / cert.beta1 if cfg.box_factor == "auto" else float(cfg.box_factor)
    radii = {n: math.ceil(bf * n) for n in cfg.n_grid}
    worst = max(radii.values())
    need = edge_count(worst, cfg.d)
    if need > cfg.max_edges:
        raise ResourceRefusal(
            f"box B_{worst} in d={cfg.d} has {need} edges (~{need * BYTES_PER_EDGE / 2**30:.1f} GiB)"
            f"; limit is max_edges={cfg.max_edges}. Lower box_factor or the grid, "
            f"or raise max_edges.")
    return Resolved(alpha, K, cert.beta1, bf, mu, radii)


@dataclass(frozen=True)
class ReplicationRecord:
    n: int
    rep: int
    T: float
    T_hat: float
    edges: int
    escaped: bool
    an_holds: bool
    gn_holds: bool
    coupled: bool

    def to_line(self) -> str:
        return json.dumps({f.name: getattr(self, f.name) for f in fields(self)})

    @classmethod
    def from_line(cls, line: str) -> ReplicationRecord:
        raw = json.loads(line)
        if list(raw) != [f.name for f in fields(cls)]:
            raise ValueError(f"unexpected record fields {list(raw)}")
        return cls(**raw)


def run_replication(schedule: DistributionSchedule, d: int, n: int, rep: int, radius: int,
                    alpha: float, mu_sup: float, master_seed: int) -> ReplicationRecord:
    box = Box(radius, d)
    w = sample_field(schedule, box, master_seed, rep)
    wt = truncate_field(w, n, alpha)
    src, dst = axis_site(0, d), axis_site(n, d)
    res = GeodesicSolve(w, src, dst).canonical()
    res_hat = GeodesicSolve(wt, src, dst).canonical()
    if res_hat.time > res.time:
        raise AssertionError(f"truncated time exceeds T at n={n}, rep={rep}")
    cap = truncation_cap(n, alpha)
    axis = wt.weights[axis_edge_indices(box, 2 * n)]
    axis_sum = 0.0
    for x in axis:
        axis_sum += x
    return ReplicationRecord(
        n=n, rep=rep, T=float(res.time), T_hat=float(res_hat.time), edges=res_hat.edge_count,
        escaped=bool(res.touches_boundary or res_hat.touches_boundary),
        an_holds=bool(axis_sum <= 6 * mu_sup * n),
        gn_holds=bool(w.weights.max() < cap),
        coupled=bool(res.time == res_hat.time and res.path == res_hat.path),
    )


def _run_chunk(job: tuple) -> list[ReplicationRecord]:
    schedule, d, n, reps, radius, alpha, mu, seed = job
    return [run_replication(schedule, d, n, r, radius, alpha, mu, seed) for r in reps]


def _worker_count(threads: int) -> int:
    return max(1, os.cpu_count() or 1) if threads == 0 else max(1, threads)


def run_records(cfg: ExperimentConfig, resolved: Resolved, threads: int = 1) -> list[ReplicationRecord]:
    workers = _worker_count(threads)
    chunk = max(1, math.ceil(cfg.replications / (4 * workers)))
    jobs = []
    for n in cfg.n_grid:
        for start in range(0, cfg.replications, chunk):
            reps = range(start, min(start + chunk, cfg.replications))
            jobs.append((cfg.schedule, cfg.d, n, reps, resolved.radii[n], resolved.alpha,
                         resolved.mu_sup, cfg.master_seed))
    if workers == 1:
        out = [r for job in jobs for r in _run_chunk(job)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = [r for part in pool.map(_run_chunk, jobs) for r in part]
    return sorted(out, key=lambda r: (r.n, r.rep))


# -- aggregation -----------------------------------------------------------

@dataclass(frozen=True)
class NStats:
    n: int
    radius: int
    T: Moments
    T_hat: Moments
    edges: Moments
    an_fail: Frequency
    gn_fail: Frequency
    escaped: Frequency
    uncoupled: Frequency
    coupling_violations: int  # G_n holds but T != T_hat or paths differ

    def row(self) -> dict:
        return {
            "n": self.n, "radius": self.radius,
            "mean_T": self.T.mean, "var_T": self.T.var, "var_T_se": self.T.var_se,
            "mean_T_se": self.T.mean_se,
            "mean_T_hat": self.T_hat.mean, "var_T_hat": self.T_hat.var,
            "var_T_hat_se": self.T_hat.var_se, "mean_edges": self.edges.mean,
            "freq_an_fail": self.an_fail.p, "se_an_fail": self.an_fail.se,
            "freq_gn_fail": self.gn_fail.p, "se_gn_fail": self.gn_fail.se,
            "freq_escaped": self.escaped.p, "se_escaped": self.escaped.se,
            "freq_uncoupled": self.uncoupled.p, "se_uncoupled": self.uncoupled.se,
            "coupling_violations": self.coupling_violations,
        }


@dataclass(frozen=True)
class EventRow:
    n: int
    an_fail: float
    an_se: float
    an_bound: float
    gn_fail: float
    gn_se: float
    gn_bound: float
    escaped: float
    uncoupled: float

    @property
    def an_margin(self) -> float:
        return self.an_bound + 3 * self.an_se - self.an_fail

    @property
    def gn_margin(self) -> float:
        return self.gn_bound + 3 * self.gn_se - self.gn_fail


@dataclass(frozen=True)
class SubsequenceRow:
    n: int  # the grid point, a perfect square k^2
    root: int
    mean_proxy: float
    max_proxy: float
    exceed: float
    exceed_se: float
    shape: float  # k^-(2 - 6 alpha), up to an unknown constant


@dataclass
class ExperimentSummary:
    per_n: list[NStats]
    mu_fekete: float
    fit: PowerFit | None
    fit_hat: PowerFit | None
    subsequence: list[SubsequenceRow]
    events: list[EventRow]
    lemma: list[dict] = field(default_factory=list)

    def stats_for(self, n: int) -> NStats:
        return next(s for s in self.per_n if s.n == n)

    def as_dict(self) -> dict:
        return {
            "per_n": [s.row() for s in self.per_n],
            "mu_fekete": self.mu_fekete,
            "variance_fit": asdict(self.fit) if self.fit else None,
            "variance_fit_hat": asdict(self.fit_hat) if self.fit_hat else None,
            "subsequence": [asdict(r) for r in self.subsequence],
            "events": [asdict(r) | {"an_margin": r.an_margin, "gn_margin": r.gn_margin}
                       for r in self.events],
            "lemma": self.lemma,
        }


def _freq(flags: Iterable[bool]) -> Frequency:
    flags = list(flags)
    return Frequency(sum(flags), len(flags))


def fit_variance_exponent(summary: ExperimentSummary, truncated: bool = False) -> PowerFit | None:
    """Slope of log var(T) against log n; None (not applicable) for degenerate grids."""
    ns = [s.n for s in summary.per_n]
    vs = [(s.T_hat if truncated else s.T).var for s in summary.per_n]
    return loglog_fit(ns, vs)


def subsequence_diagnostic(records: Sequence[ReplicationRecord], alpha: float,
                           eps: float) -> list[SubsequenceRow]:
    """|T_hat - mean T_hat| / N at grid points N = k^2; empty if none are squares."""
    rows = []
    for n in sorted({r.n for r in records}):
        k = math.isqrt(n)
        if k * k != n:
            continue
        xs = [r.T_hat for r in records if r.n == n]
        mean = math.fsum(xs) / len(xs)
        proxy = [abs(x - mean) / n for x in xs]
        fr = _freq(p > eps for p in proxy)
        rows.append(SubsequenceRow(n, k, math.fsum(proxy) / len(proxy), max(proxy),
                                   fr.p, fr.se, float(k) ** -(2 - 6 * alpha)))
    return rows


def event_frequencies(records: Sequence[ReplicationRecord], cfg: ExperimentConfig,
                      resolved: Resolved) -> list[EventRow]:
    if not records:
        raise ValueError("no records")
    rows = []
    for n in sorted({r.n for r in records}):
        rs = [r for r in records if r.n == n]
        an = _freq(not r.an_holds for r in rs)
        gn = _freq(not r.gn_holds for r in rs)
        box = Box(resolved.radii.get(n, math.ceil(resolved.box_factor * n)), cfg.d)
        try:
            gb = bounds.gn_bound(cfg.schedule, cfg.d, resolved.alpha, resolved.K, n,
                                 resolved.box_factor)
        except bounds.BoundError:
            gb = math.inf
        try:
            ab = bounds.an_bound(cfg.schedule, n, cfg.d,
                                 box if cfg.schedule.rule == "periodic" else None)
        except bounds.BoundError:
            ab = math.inf
        rows.append(EventRow(n, an.p, an.se, ab, gn.p, gn.se, gb,
                             _freq(r.escaped for r in rs).p,
                             _freq(not r.coupled for r in rs).p))
    return rows


def summarize(records: Sequence[ReplicationRecord], cfg: ExperimentConfig,
              resolved: Resolved) -> ExperimentSummary:
    records = sorted(records, key=lambda r: (r.n, r.rep))
    per_n = []
    lemma = []
    for n in sorted({r.n for r in records}):
        rs = [r for r in records if r.n == n]
        st = NStats(
            n=n, radius=resolved.radii.get(n, math.ceil(resolved.box_factor * n)),
            T=moments([r.T for r in rs]), T_hat=moments([r.T_hat for r in rs]),
            edges=moments([float(r.edges) for r in rs]),
            an_fail=_freq(not r.an_holds for r in rs),
            gn_fail=_freq(not r.gn_holds for r in rs),
            escaped=_freq(r.escaped for r in rs),
            uncoupled=_freq(not r.coupled for r in rs),
            coupling_violations=sum(r.gn_holds and not r.coupled for r in rs),
        )
        per_n.append(st)
        bound = bounds.lemma_variance_bound(n, resolved.alpha, st.edges.mean)
        lemma.append({"n": n, "var_T_hat": st.T_hat.var, "var_se": st.T_hat.var_se,
                      "bound": bound,
                      "passes": st.T_hat.var <= bound + 3 * st.T_hat.var_se,
                      "edges_over_n_1_alpha": st.edges.mean / n ** (1 + resolved.alpha)})
    summary = ExperimentSummary(
        per_n=per_n,
        mu_fekete=min(s.T.mean / s.n for s in per_n),
        fit=None, fit_hat=None,
        subsequence=subsequence_diagnostic(records, resolved.alpha, cfg.subseq_eps),
        events=event_frequencies(records, cfg, resolved),
        lemma=lemma,
    )
    summary.fit = fit_variance_exponent(summary)
    summary.fit_hat = fit_variance_exponent(summary, truncated=True)
    return summary


@dataclass
class ExperimentResult:
    cfg: ExperimentConfig
    resolved: Resolved
    records: list[ReplicationRecord]
    summary: ExperimentSummary

    def meta(self) -> dict:
        return {"config": self.cfg.as_dict(), "config_digest": self.cfg.digest(),
                "resolved": self.resolved.header(), "seed": self.cfg.master_seed}

    def records_text(self) -> str:
        body = "".join(r.to_line() + "\n" for r in self.records)
        return render_artifact("records", self.meta(), body)


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    resolved = resolve(cfg)
    records = run_records(cfg, resolved, threads)
    return ExperimentResult(cfg, resolved, records, summarize(records, cfg, resolved))


PER_N_COLUMNS = [
    "n", "radius", "mean_T", "mean_T_se", "var_T", "var_T_se", "mean_T_hat", "var_T_hat",
    "var_T_hat_se", "mean_edges", "freq_an_fail", "se_an_fail", "freq_gn_fail", "se_gn_fail",
    "freq_escaped", "se_escaped", "freq_uncoupled", "se_uncoupled", "coupling_violations",
]


def write_outputs(result: ExperimentResult, outdir: Path) -> dict[str, Path]:
    """Records, summary and CSV tables; every file carries the same header metadata."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    meta = result.meta()
    s = result.summary
    files = {
        "records.jsonl": result.records_text(),
        "summary.json": render_artifact("summary", meta,
                                        json.dumps(s.as_dict(), indent=1, sort_keys=True) + "\n"),
        "per_n.csv": render_artifact("table", meta, csv_body(
            PER_N_COLUMNS, ([st.row()[c] for c in PER_N_COLUMNS] for st in s.per_n))),
        "events.csv": render_artifact("table", meta, csv_body(
            ["n", "an_fail", "an_se", "an_bound", "gn_fail", "gn_se", "gn_bound",
             "escaped", "uncoupled"],
            ([e.n, e.an_fail, e.an_se, e.an_bound, e.gn_fail, e.gn_se, e.gn_bound,
              e.escaped, e.uncoupled] for e in s.events))),
        "subsequence.csv": render_artifact("table", meta, csv_body(
            ["n", "root", "mean_proxy", "max_proxy", "exceed", "exceed_se", "shape"],
            ([r.n, r.root, r.mean_proxy, r.max_proxy, r.exceed, r.exceed_se, r.shape]
             for r in s.subsequence))),
    }
    paths = {}
    for name, text in files.items():
        p = outdir / name
        p.write_text(text, encoding="utf-8", newline="\n")
        paths[name] = p
    return paths


def load_records(path: Path) -> tuple[dict, list[ReplicationRecord]]:
    header, body = read_artifact(path, "records")
    return header, [ReplicationRecord.from_line(x) for x in body.splitlines() if x.strip()]


# -- edge influence ----------------------------------------------------------

@dataclass(frozen=True)
class ProbeOutcome:
    rep: int
    edge: int
    old: float
    new: float
    delta: float
    on_before: bool
    on_after: bool


@dataclass
class InfluenceReport:
    n: int
    cap: float
    outcomes: list[ProbeOutcome]
    num_edges: int
    mean_edges: float
    alpha: float

    @property
    def lipschitz_violations(self) -> int:
        return sum(abs(o.delta) > self.cap for o in self.outcomes)

    @property
    def support_violations(self) -> int:
        return sum(o.delta != 0 and not (o.on_before or o.on_after) for o in self.outcomes)

    @property
    def nonzero(self) -> int:
        return sum(o.delta != 0 for o in self.outcomes)

    @property
    def max_abs_delta(self) -> float:
        return max((abs(o.delta) for o in self.outcomes), default=0.0)

    @property
    def efron_stein(self) -> float:
        """Efron-Stein estimate (1/2) * #edges * E[delta^2] of Var(T_hat).

        Only meaningful for uniformly targeted probes.
        """
        sq = math.fsum(o.delta**2 for o in self.outcomes) / max(len(self.outcomes), 1)
        return 0.5 * self.num_edges * sq

    @property
    def lemma_bound(self) -> float:
        return bounds.lemma_variance_bound(self.n, self.alpha, max(self.mean_edges, self.n))


def edge_influence_probe(cfg: ExperimentConfig, n: int, probes: int,
                         resolved: Resolved | None = None, per_field: int = 50,
                         target: str = "uniform") -> InfluenceReport:
    """Resample one edge at a time and re-solve the truncated problem.

    ``target='uniform'`` picks the edge uniformly from the box; ``'path'``
    picks it uniformly from the current canonical truncated geodesic, which
    exercises the branch where the time actually moves.
    """
    if probes < 1:
        raise ValueError("probes must be at least 1")
    if target not in ("uniform", "path"):
        raise ValueError("target must be 'uniform' or 'path'")
    resolved = resolved or resolve(cfg)
    radius = resolved.radii.get(n, math.ceil(resolved.box_factor * n))
    box = Box(radius, cfg.d)
    alpha = resolved.alpha
    cap = truncation_cap(n, alpha)
    src, dst = axis_site(0, cfg.d), axis_site(n, cfg.d)
    outcomes = []
    edge_counts = []
    probe_id = 0
    rep = 0
    while probe_id < probes:
        wt = truncate_field(sample_field(cfg.schedule, box, cfg.master_seed, rep), n, alpha)
        before = GeodesicSolve(wt, src, dst)
        res = before.canonical()
        edge_counts.append(res.edge_count)
        path_idx = [edge_index(e, box) for e in res.path.edges]
        for _ in range(min(per_field, probes - probe_id)):
            u = uniforms(stream_key(cfg.master_seed, STREAM_PROBE_EDGE, radius, probe_id), 1)[0]
            if target == "uniform":
                idx = int(u * box.num_edges)
            else:
                idx = int(path_idx[int(u * len(path_idx))])
            new = min(resample_edge(cfg.schedule, wt, idx, cfg.master_seed, probe_id), cap)
            after = GeodesicSolve(wt.replace(idx, new), src, dst)
            outcomes.append(ProbeOutcome(rep, idx, float(wt.weights[idx]), new,
                                         after.time - before.time,
                                         before.on_geodesic_index(idx),
                                         after.on_geodesic_index(idx)))
            probe_id += 1
        rep += 1
    return InfluenceReport(n, cap, outcomes, box.num_edges,
                           math.fsum(edge_counts) / len(edge_counts), alpha)


def triangle_check(cfg: ExperimentConfig, resolved: Resolved, n: int, reps: int) -> list[tuple[float, float, float]]:
    """(T(0,2n), T(0,n), T(n,2n)) on shared fields for spot-checking subadditivity."""
    radius = resolved.radii.get(n, math.ceil(resolved.box_factor * n))
    box = Box(max(radius, 2 * n), cfg.d)
    out = []
    for rep in range(reps):
        w = sample_field(cfg.schedule, box, cfg.master_seed, rep)
        a, m, b = axis_site(0, cfg.d), axis_site(n, cfg.d), axis_site(2 * n, cfg.d)
        out.append((GeodesicSolve(w, a, b).time, GeodesicSolve(w, a, m).time,
                    GeodesicSolve(w, m, b).time))
    return out
