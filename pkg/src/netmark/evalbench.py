"""Detection-accuracy and overhead experiments over a benchmark corpus.

All randomness is derived from the plan's master seed, so a plan reproduces
its CSV byte for byte (wall-clock timing is opt-in for that reason).
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
import zlib
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats

from .netlist import Netlist, read_bench
from .tamper import (Equivalence, MutationError, MutationKind, MutationSpec,
                     is_functionally_changed, mutate)
from .watermark import WatermarkConfig, authenticate, sign

log = logging.getLogger(__name__)

CSV_FIELDS = ("benchmark", "kind", "magnitude", "challenges", "digest_bits", "trials",
              "excluded", "detected", "rate", "ci_lo", "ci_hi", "mean_bit_mismatch",
              "max_bit_mismatch", "seconds")

Magnitude = Union[int, str]


@dataclass
class ExperimentPlan:
    corpus: list
    trials: int = 200
    magnitudes: list = field(default_factory=lambda: [0, 5])
    challenge_counts: list = field(default_factory=lambda: [100])
    digest_widths: list = field(default_factory=lambda: [4])
    kinds: list = field(default_factory=lambda: ["mixed"])
    group_size: int = 8
    vectors: int = 10_000
    threshold: float = 0.1
    equivalence_budget: int = 2048
    seed: int = 2024
    output: Optional[str] = None
    timing: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for grid in ("corpus", "magnitudes", "challenge_counts", "digest_widths", "kinds"):
            if not getattr(self, grid):
                raise ValueError(f"{grid} must be nonempty")
        for k in self.kinds:
            MutationKind.parse(k)

    @classmethod
    def from_json(cls, path) -> "ExperimentPlan":
        path = Path(path)
        doc = json.loads(path.read_text())
        # corpus entries are relative to the plan file
        doc["corpus"] = [str((path.parent / c)) if not Path(c).is_absolute() else c
                         for c in doc["corpus"]]
        return cls(**doc)


def resolve_magnitude(m: Magnitude, gate_count: int) -> int:
    """Absolute gate count; ``"0.5%"`` means ``ceil(0.5% of gates)``."""
    if isinstance(m, str) and m.strip().endswith("%"):
        pct = float(m.strip()[:-1])
        return max(1, math.ceil(round(pct / 100.0 * gate_count, 9)))
    return int(m)


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from a mix of ints and strings."""
    words = [zlib.crc32(p.encode()) if isinstance(p, str) else int(p) & 0xFFFFFFFF for p in parts]
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


def wilson_interval(detected: int, n: int, level: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    ci = stats.binomtest(detected, n).proportion_ci(confidence_level=level, method="wilson")
    return (float(ci.low), float(ci.high))


@dataclass(frozen=True)
class Trial:
    benchmark: str
    kind: str
    magnitude: int
    digest_bits: int
    index: int
    seed: int
    equivalence: str
    detected: dict  # challenge count -> bool
    mean_bit_mismatch: dict  # challenge count -> fraction
    max_bit_mismatch: dict  # challenge count -> bits

    @property
    def excluded(self) -> bool:
        return self.equivalence == Equivalence.PROVEN_EQUAL.value


@dataclass
class ResultRow:
    benchmark: str
    kind: str
    magnitude: int
    challenges: int
    digest_bits: int
    trials: int
    excluded: int
    detected: int
    rate: float
    ci_lo: float
    ci_hi: float
    mean_bit_mismatch: float
    max_bit_mismatch: int
    seconds: Optional[float] = None

    def csv_values(self) -> list[str]:
        secs = "" if self.seconds is None else f"{self.seconds:.3f}"
        return [self.benchmark, self.kind, str(self.magnitude), str(self.challenges),
                str(self.digest_bits), str(self.trials), str(self.excluded), str(self.detected),
                f"{self.rate:.6f}", f"{self.ci_lo:.6f}", f"{self.ci_hi:.6f}",
                f"{self.mean_bit_mismatch:.6f}", str(self.max_bit_mismatch), secs]


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)
    trials: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in self.rows:
            w.writerow(r.csv_values())
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv())

    def row(self, **key) -> ResultRow:
        hits = [r for r in self.rows if all(getattr(r, k) == v for k, v in key.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {key}")
        return hits[0]

    def select_trials(self, **key) -> list[Trial]:
        return [t for t in self.trials if all(getattr(t, k) == v for k, v in key.items())]


def _load(entry) -> Netlist:
    return entry if isinstance(entry, Netlist) else read_bench(entry)


def _signed(netlist: Netlist, plan: ExperimentPlan, d: int):
    cfg = WatermarkConfig(
        digest_bits=d, group_size=plan.group_size, challenges=max(plan.challenge_counts),
        vectors=plan.vectors, threshold=plan.threshold,
        vector_seed=derive_seed(plan.seed, netlist.name, "vectors"),
        cluster_seed=derive_seed(plan.seed, netlist.name, "kmeans"),
        select_seed=derive_seed(plan.seed, netlist.name, "select"),
    )
    return sign(netlist, cfg)


def run_trial(signed, kind: str, magnitude: int, index: int, seed: int,
              challenge_counts: Sequence[int], budget: int, benchmark: str) -> Trial:
    """One mutate -> equivalence check -> authenticate round."""
    golden = signed.watermarked
    d = signed.plan.digest_bits
    counts = sorted(challenge_counts)
    if magnitude == 0:
        under_test, eq = golden, Equivalence.PROVEN_EQUAL.value
    else:
        spec = MutationSpec(MutationKind.parse(kind), magnitude, seed, signed.plan.protected_nets)
        under_test, _ = mutate(golden, spec)
        eq = is_functionally_changed(golden, under_test, budget, seed=seed ^ 0x5A5A).value
    report = authenticate(under_test, signed.db)
    det, mean, mx = {}, {}, {}
    for c in counts:
        r = report.prefix(c)
        det[c] = r.entries_mismatched > 0 or bool(r.structural_issues)
        mean[c] = r.mean_mismatch_fraction
        mx[c] = r.max_bit_mismatch
    return Trial(benchmark, kind, magnitude, d, index, seed, eq, det, mean, mx)


def _aggregate(trials: list[Trial], c: int, bench: str, kind: str, mag: int, d: int,
               seconds: Optional[float]) -> ResultRow:
    # magnitude-0 controls are "proven equal" by definition but stay in the denominator
    counted = trials if mag == 0 else [t for t in trials if not t.excluded]
    excluded = len(trials) - len(counted)
    detected = sum(t.detected[c] for t in counted)
    n = len(counted)
    rate = detected / n if n else 0.0
    lo, hi = wilson_interval(detected, n)
    mean = float(np.mean([t.mean_bit_mismatch[c] for t in counted])) if n else 0.0
    mx = max((t.max_bit_mismatch[c] for t in counted), default=0)
    return ResultRow(bench, kind, mag, c, d, len(trials), excluded, detected, rate, lo, hi,
                     mean, mx, seconds)


def run_detection_sweep(plan: ExperimentPlan, progress=None) -> ResultTable:
    """Watermark each circuit once per digest width, then mutate and authenticate.

    Challenge counts are evaluated as prefixes of one database, so every
    count sees the same (paired) mutations. Failing circuits are logged and
    recorded in ``ResultTable.failures``; the sweep continues.
    """
    table = ResultTable()
    for entry in plan.corpus:
        name = entry.name if isinstance(entry, Netlist) else Path(entry).stem
        try:
            netlist = _load(entry)
            for d in plan.digest_widths:
                signed = _signed(netlist, plan, d)
                for kind in plan.kinds:
                    for m in plan.magnitudes:
                        mag = resolve_magnitude(m, netlist.gate_count)
                        t0 = time.perf_counter()
                        trials = []
                        for t in range(plan.trials):
                            seed = derive_seed(plan.seed, name, d, kind, mag, t)
                            trials.append(run_trial(signed, kind, mag, t, seed,
                                                    plan.challenge_counts,
                                                    plan.equivalence_budget, name))
                        secs = time.perf_counter() - t0 if plan.timing else None
                        table.trials.extend(trials)
                        for c in sorted(plan.challenge_counts):
                            table.rows.append(_aggregate(trials, c, name, kind, mag, d, secs))
                        if progress:
                            progress(name, d, kind, mag)
        except (OSError, ValueError, MutationError) as exc:
            log.error("%s: %s", name, exc)
            table.failures[name] = str(exc)
    return table


def run_mismatch_profile(plan: ExperimentPlan, progress=None) -> ResultTable:
    """Digest-bit mismatch as modification size grows, at the largest challenge count."""
    single = ExperimentPlan(**{**asdict(plan), "challenge_counts": [max(plan.challenge_counts)]})
    single.corpus = plan.corpus
    return run_detection_sweep(single, progress)


def modal_max_mismatch(trials: Sequence[Trial], c: int, detected_only: bool = False) -> int:
    """Most common per-trial max digest-bit mismatch (ties -> smaller value)."""
    vals = [t.max_bit_mismatch[c] for t in trials
            if not t.excluded and (t.detected[c] or not detected_only)]
    if not vals:
        return 0
    counts = np.bincount(vals)
    return int(np.argmax(counts))


def mismatch_trend(trials: Sequence[Trial], c: int):
    """Spearman correlation between magnitude and per-trial mismatch fraction."""
    xs = [t.magnitude for t in trials if not t.excluded or t.magnitude == 0]
    ys = [t.mean_bit_mismatch[c] for t in trials if not t.excluded or t.magnitude == 0]
    res = stats.spearmanr(xs, ys)
    return float(res.statistic), float(res.pvalue)


def paired_bootstrap_difference(lo: np.ndarray, hi: np.ndarray, n_boot: int = 2000,
                                seed: int = 0, level: float = 0.95) -> tuple[float, float, float]:
    """Bootstrap CI for mean(hi) - mean(lo) over paired 0/1 outcomes."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(lo), size=(n_boot, len(lo)))
    diffs = hi[idx].mean(axis=1) - lo[idx].mean(axis=1)
    a = (1 - level) / 2
    return float(hi.mean() - lo.mean()), float(np.quantile(diffs, a)), float(np.quantile(diffs, 1 - a))


@dataclass(frozen=True)
class OverheadRow:
    benchmark: str
    gates_before: int
    gates_after: int

    @property
    def delta(self) -> int:
        return self.gates_after - self.gates_before


def overhead_table(corpus: Sequence, d: int = 4, g: int = 8,
                   config: Optional[WatermarkConfig] = None) -> list[OverheadRow]:
    """Gate counts before/after watermarking; gate count doubles as unit-area proxy.

    Challenge mining cannot change the count, so one challenge is mined; this
    keeps narrow circuits with few distinct vectors in the table.
    """
    base = config or WatermarkConfig()
    cfg = WatermarkConfig(**{**base.as_dict(), "digest_bits": d, "group_size": g, "challenges": 1})
    rows = []
    for entry in corpus:
        n = _load(entry)
        res = sign(n, cfg)
        rows.append(OverheadRow(n.name, n.gate_count, res.watermarked.gate_count))
    return rows


def format_overhead(rows: Sequence[OverheadRow]) -> str:
    lines = [f"{'benchmark':<12}{'gates':>8}{'after':>8}{'delta':>7}"]
    lines += [f"{r.benchmark:<12}{r.gates_before:>8}{r.gates_after:>8}{r.delta:>+7}" for r in rows]
    return "\n".join(lines) + "\n"


def plan_metadata(plan: ExperimentPlan) -> dict:
    """Sidecar description of a sweep; deterministic (no timestamps)."""
    doc = asdict(plan)
    doc["corpus"] = [c if isinstance(c, str) else getattr(c, "name", str(c)) for c in plan.corpus]
    doc["notes"] = ("sequential circuits are evaluated under full scan; detection = "
                    "at least one mismatched digest bit on at least one challenge")
    return doc
