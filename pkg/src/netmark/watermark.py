"""Digest insertion, challenge mining, CRP databases and authentication."""
from __future__ import annotations

import enum
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .netlist import Gate, GateFunction, Netlist, NetId, NetlistError, serialize_bench
from .select import SensitiveSet, cluster_nets, score_nets, select_sensitive
from .sim import (RandomVectorSet, TraceMatrix, activity, evaluate, generate_vectors,
                  simulate, toggle_matrix)

log = logging.getLogger(__name__)

DIGEST_PREFIX = "SIGNED_DIGEST_"
DB_VERSION = 1


@dataclass(frozen=True)
class WatermarkConfig:
    digest_bits: int = 4
    group_size: int = 8
    challenges: int = 100
    vectors: int = 10_000
    threshold: float = 0.1
    vector_seed: int = 1
    cluster_seed: int = 2
    select_seed: int = 3
    max_iters: int = 100
    fanin: str = "cone"

    def __post_init__(self):
        for knob in ("digest_bits", "group_size", "challenges", "vectors", "max_iters"):
            if getattr(self, knob) < 1:
                raise ValueError(f"{knob} must be >= 1")
        if not 0 < self.threshold <= 1:
            raise ValueError("threshold must lie in (0, 1]")

    @property
    def k(self) -> int:
        return self.digest_bits * self.group_size

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


@dataclass(frozen=True)
class DigestPlan:
    groups: tuple[tuple[NetId, ...], ...]
    tree_nets: tuple[tuple[NetId, ...], ...]  # XOR gate outputs per bit, chain order
    output_nets: tuple[NetId, ...]
    output_names: tuple[str, ...]

    @property
    def digest_bits(self) -> int:
        return len(self.groups)

    @property
    def inserted_gates(self) -> int:
        return sum(len(t) for t in self.tree_nets)

    @property
    def protected_nets(self) -> frozenset[NetId]:
        return frozenset(n for t in self.tree_nets for n in t)


def insert_digest(netlist: Netlist, sensitive, d: int) -> tuple[Netlist, DigestPlan]:
    """Append ``d`` left-deep XOR chains over the sensitive nets.

    Nets are dealt round-robin into ``d`` groups; group ``i`` drives the new
    primary output ``SIGNED_DIGEST_<i>``. A single-net group has no gate and
    exposes the sensitive net itself as the digest output.
    """
    nets = list(sensitive.nets if isinstance(sensitive, SensitiveSet) else sensitive)
    if d < 1:
        raise ValueError("digest width must be >= 1")
    if d > len(nets):
        raise ValueError(f"digest width {d} exceeds {len(nets)} sensitive nets")
    if len(set(nets)) != len(nets):
        raise ValueError("sensitive nets must be distinct")
    for n in nets:
        netlist.check_net(n)
    clash = [n for n in netlist.net_names if n.startswith(DIGEST_PREFIX)]
    if clash:
        raise NetlistError(f"net name {clash[0]!r} collides with the {DIGEST_PREFIX} prefix")

    groups = tuple(tuple(nets[i::d]) for i in range(d))
    names = list(netlist.net_names)
    gates = list(netlist.gates)
    pos = list(netlist.primary_outputs)
    trees, outs, out_names = [], [], []
    for i, grp in enumerate(groups):
        if len(grp) == 1:
            trees.append(())
            outs.append(grp[0])
            out_names.append(names[grp[0]])
            if grp[0] not in pos:
                pos.append(grp[0])
            continue
        chain = []
        acc = grp[0]
        for j, n in enumerate(grp[1:], start=1):
            last = j == len(grp) - 1
            names.append(f"{DIGEST_PREFIX}{i}" if last else f"{DIGEST_PREFIX}{i}_x{j}")
            out = len(names) - 1
            gates.append(Gate(out, GateFunction.XOR, (acc, n)))
            chain.append(out)
            acc = out
        trees.append(tuple(chain))
        outs.append(acc)
        out_names.append(names[acc])
        pos.append(acc)
    marked = Netlist(name=netlist.name, net_names=tuple(names),
                     primary_inputs=netlist.primary_inputs, primary_outputs=tuple(pos),
                     gates=tuple(gates), state_elements=netlist.state_elements)
    plan = DigestPlan(groups=groups, tree_nets=tuple(trees), output_nets=tuple(outs),
                      output_names=tuple(out_names))
    return marked, plan


def rank_vectors(trace: TraceMatrix, vectors, sensitive) -> tuple[np.ndarray, np.ndarray]:
    """Vector indices ordered by sensitive-net toggle count (desc, index asc).

    Duplicate vectors keep only their first occurrence. Returns ``(order, scores)``
    where ``scores`` covers every vector.
    """
    nets = list(sensitive.nets if isinstance(sensitive, SensitiveSet) else sensitive)
    bits = vectors.bits if isinstance(vectors, RandomVectorSet) else np.asarray(vectors, dtype=bool)
    if bits.shape[0] != trace.n_vectors:
        raise ValueError("trace was not built from these vectors")
    scores = toggle_matrix(trace, nets).sum(axis=1) if nets else np.zeros(trace.n_vectors, int)
    packed = np.packbits(bits, axis=1)
    _, first = np.unique(packed, axis=0, return_index=True)
    distinct = np.sort(first)
    order = distinct[np.lexsort((distinct, -scores[distinct]))]
    return order, scores


def mine_challenges(trace: TraceMatrix, vectors, sensitive, count: int) -> np.ndarray:
    """The ``count`` distinct vectors that toggle the most sensitive nets."""
    if count < 1:
        raise ValueError("challenge count must be >= 1")
    order, _ = rank_vectors(trace, vectors, sensitive)
    if count > len(order):
        raise ValueError(f"{count} challenges requested but only {len(order)} distinct vectors")
    bits = vectors.bits if isinstance(vectors, RandomVectorSet) else np.asarray(vectors, dtype=bool)
    return bits[order[:count]].copy()


# -- bit encodings ------------------------------------------------------------

def bits_to_hex(bits) -> str:
    """MSB-first hex: the first bit is the most significant of ``ceil(n/4)`` digits."""
    bits = [int(bool(b)) for b in bits]
    value = int("".join(map(str, bits)), 2) if bits else 0
    return format(value, f"0{-(-len(bits) // 4)}x")


def hex_to_bits(text: str, width: int) -> np.ndarray:
    value = int(text, 16)
    if value >> width:
        raise ValueError(f"challenge {text!r} does not fit {width} bits")
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=bool)


def bits_to_str(bits) -> str:
    return "".join("1" if b else "0" for b in bits)


@dataclass(frozen=True, eq=False)
class CrpDatabase:
    circuit_id: str
    digest_bits: int
    inputs: tuple[str, ...]
    challenges: np.ndarray  # (C, width) bool
    digests: np.ndarray  # (C, d) bool
    digest_outputs: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.challenges.shape[1:] != (len(self.inputs),):
            raise ValueError("challenge width does not match input list")
        if self.digests.shape != (len(self.challenges), self.digest_bits):
            raise ValueError("digest table has the wrong shape")
        if len(self.challenges) < 1:
            raise ValueError("a CRP database needs at least one challenge")
        if len(np.unique(np.packbits(self.challenges, axis=1), axis=0)) != len(self.challenges):
            raise ValueError("challenges must be distinct")

    def __len__(self):
        return len(self.challenges)

    @property
    def output_names(self) -> tuple[str, ...]:
        return self.digest_outputs or tuple(f"{DIGEST_PREFIX}{i}" for i in range(self.digest_bits))

    def to_json(self) -> str:
        doc = {
            "version": DB_VERSION,
            "circuit_id": self.circuit_id,
            "digest_bits": self.digest_bits,
            "inputs": list(self.inputs),
            "digest_outputs": list(self.output_names),
            "entries": [{"challenge": bits_to_hex(c), "digest": bits_to_str(g)}
                        for c, g in zip(self.challenges, self.digests)],
            "meta": self.meta,
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CrpDatabase":
        doc = json.loads(text)
        if doc.get("version") != DB_VERSION:
            raise ValueError(f"unsupported CRP database version {doc.get('version')!r}")
        inputs = tuple(doc["inputs"])
        d = int(doc["digest_bits"])
        entries = doc["entries"]
        chal = np.array([hex_to_bits(e["challenge"], len(inputs)) for e in entries], dtype=bool)
        dig = np.array([[c == "1" for c in e["digest"]] for e in entries], dtype=bool)
        if chal.size == 0:
            chal = chal.reshape(0, len(inputs))
            dig = dig.reshape(0, d)
        return cls(circuit_id=doc["circuit_id"], digest_bits=d, inputs=inputs,
                   challenges=chal, digests=dig,
                   digest_outputs=tuple(doc.get("digest_outputs", ())),
                   meta=doc.get("meta", {}))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "CrpDatabase":
        return cls.from_json(Path(path).read_text())


def circuit_id(netlist: Netlist) -> str:
    """SHA-256 of the canonical (header-less) ``.bench`` text."""
    return hashlib.sha256(serialize_bench(netlist, header=False).encode()).hexdigest()


def build_crp_db(watermarked: Netlist, plan: DigestPlan, challenges, meta: Optional[dict] = None) -> CrpDatabase:
    """Record the golden digest for every challenge."""
    chal = np.atleast_2d(np.asarray(challenges, dtype=bool))
    if len(chal) == 0 or chal.size == 0:
        raise ValueError("at least one challenge is required")
    if chal.shape[1] != watermarked.input_width:
        raise ValueError(f"challenge width {chal.shape[1]} != {watermarked.input_width}")
    digests = evaluate(watermarked, chal, plan.output_nets)
    names = watermarked.net_names
    return CrpDatabase(circuit_id=circuit_id(watermarked), digest_bits=plan.digest_bits,
                       inputs=tuple(names[i] for i in watermarked.effective_inputs),
                       challenges=chal.copy(), digests=digests,
                       digest_outputs=plan.output_names, meta=dict(meta or {}))


class Verdict(enum.Enum):
    AUTHENTIC = "AUTHENTIC"
    TAMPERED = "TAMPERED"


class ModificationSize(enum.Enum):
    NONE = "NONE"
    SMALL = "SMALL"
    LARGE = "LARGE"


@dataclass(frozen=True, eq=False)
class DetectionReport:
    golden: np.ndarray  # (C, d)
    observed: Optional[np.ndarray]  # (C, d) or None after a structural failure
    structural_issues: tuple[str, ...] = ()
    circuit_id_match: bool = True

    @property
    def mismatches(self) -> np.ndarray:
        """Per-entry count of differing digest bits."""
        if self.observed is None:
            return np.full(len(self.golden), self.golden.shape[1], dtype=np.int64)
        return (self.observed != self.golden).sum(axis=1)

    @property
    def entries_checked(self) -> int:
        return len(self.golden)

    @property
    def entries_mismatched(self) -> int:
        return int((self.mismatches > 0).sum())

    @property
    def max_bit_mismatch(self) -> int:
        return int(self.mismatches.max()) if len(self.golden) else 0

    @property
    def mean_mismatch_fraction(self) -> float:
        if not len(self.golden):
            return 0.0
        return float(self.mismatches.mean() / self.golden.shape[1])

    @property
    def verdict(self) -> Verdict:
        if self.structural_issues or self.entries_mismatched:
            return Verdict.TAMPERED
        return Verdict.AUTHENTIC

    def prefix(self, count: int) -> "DetectionReport":
        """The report restricted to the first ``count`` challenges."""
        obs = None if self.observed is None else self.observed[:count]
        return DetectionReport(self.golden[:count], obs, self.structural_issues, self.circuit_id_match)

    def summary(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "entries_checked": self.entries_checked,
            "entries_mismatched": self.entries_mismatched,
            "max_bit_mismatch": self.max_bit_mismatch,
            "mean_mismatch_fraction": self.mean_mismatch_fraction,
            "circuit_id_match": self.circuit_id_match,
            "structural_issues": list(self.structural_issues),
            "estimate": estimate_modification(self).value,
        }

    def to_dict(self) -> dict:
        doc = self.summary()
        doc["entries"] = [
            {"golden": bits_to_str(g),
             "observed": None if self.observed is None else bits_to_str(o),
             "mismatch": int(m)}
            for g, o, m in zip(self.golden,
                               self.observed if self.observed is not None else [None] * len(self.golden),
                               self.mismatches)
        ]
        return doc


def authenticate(under_test: Netlist, db: CrpDatabase) -> DetectionReport:
    """Apply every challenge and compare digests bit for bit.

    Interface problems (different inputs, missing digest outputs) produce a
    TAMPERED report instead of an exception.
    """
    names = under_test.net_names
    issues = []
    eff = [names[i] for i in under_test.effective_inputs]
    if len(eff) != len(db.inputs) or set(eff) != set(db.inputs):
        issues.append(f"input interface mismatch: circuit has {len(eff)} inputs, "
                      f"database expects {len(db.inputs)}")
    po_names = {names[i] for i in under_test.primary_outputs}
    missing = [o for o in db.output_names if o not in po_names]
    if missing:
        issues.append(f"digest outputs missing (removal evidence): {', '.join(missing)}")
    id_match = circuit_id(under_test) == db.circuit_id
    if issues:
        return DetectionReport(db.digests, None, tuple(issues), id_match)
    col = {n: j for j, n in enumerate(db.inputs)}
    perm = [col[n] for n in eff]
    outs = [under_test.net(o) for o in db.output_names]
    observed = evaluate(under_test, db.challenges[:, perm], outs)
    return DetectionReport(db.digests, observed, (), id_match)


def estimate_modification(report: DetectionReport, small_max: int = 1) -> ModificationSize:
    """NONE without mismatches; SMALL if no entry differs in more than ``small_max`` bits."""
    if report.structural_issues:
        return ModificationSize.LARGE
    if report.entries_mismatched == 0:
        return ModificationSize.NONE
    return ModificationSize.SMALL if report.max_bit_mismatch <= small_max else ModificationSize.LARGE


# -- full insertion flow --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SignResult:
    original: Netlist
    watermarked: Netlist
    plan: DigestPlan
    sensitive: SensitiveSet
    db: CrpDatabase
    vectors: RandomVectorSet
    trace: TraceMatrix
    config: WatermarkConfig

    @property
    def gates_before(self) -> int:
        return self.original.gate_count

    @property
    def gates_after(self) -> int:
        return self.watermarked.gate_count


def sign(netlist: Netlist, config: WatermarkConfig = WatermarkConfig()) -> SignResult:
    """Select sensitive nets, insert the digest and build the CRP database."""
    vectors = generate_vectors(netlist, config.vectors, config.vector_seed)
    trace = simulate(netlist, vectors)
    act = activity(trace)
    log.info("%s: %d nets, %d constant", netlist.name, netlist.net_count, int(act.constant.sum()))
    model = cluster_nets(trace, config.k, config.cluster_seed, config.max_iters, act.constant)
    log.info("k-means: k=%d, %d iterations", config.k, model.iterations_run)
    scores = score_nets(netlist, act, fanin=config.fanin)
    sensitive = select_sensitive(model, scores, config.threshold, config.select_seed)
    sensitive.extra.update(config.as_dict())
    marked, plan = insert_digest(netlist, sensitive, config.digest_bits)
    challenges = mine_challenges(trace, vectors, sensitive, config.challenges)
    meta = {"source": netlist.name, "config": config.as_dict(),
            "sensitive_nets": [netlist.net_names[n] for n in sensitive.nets]}
    db = build_crp_db(marked, plan, challenges, meta)
    return SignResult(netlist, marked, plan, sensitive, db, vectors, trace, config)
