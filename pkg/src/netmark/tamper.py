"""Seeded structural mutations used as stand-ins for malicious modifications."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .netlist import Gate, GateFunction, Netlist, NetId
from .sim import generate_vectors, evaluate

MAX_RETRIES = 200
EXHAUSTIVE_LIMIT = 12

_MULTI = (GateFunction.AND, GateFunction.NAND, GateFunction.OR,
          GateFunction.NOR, GateFunction.XOR, GateFunction.XNOR)
_SPLICE = (GateFunction.AND, GateFunction.OR, GateFunction.XOR)


class MutationKind(enum.Enum):
    GATE_TYPE_SUBSTITUTION = "substitution"
    GATE_INSERTION = "insertion"
    GATE_REMOVAL = "removal"
    WIRE_SWAP = "wire_swap"
    MIXED = "mixed"

    @classmethod
    def parse(cls, text: str) -> "MutationKind":
        t = text.strip().lower()
        for k in cls:
            if t in (k.value, k.name.lower()):
                return k
        raise ValueError(f"unknown mutation kind {text!r}")


_CONCRETE = (MutationKind.GATE_TYPE_SUBSTITUTION, MutationKind.GATE_INSERTION,
             MutationKind.GATE_REMOVAL, MutationKind.WIRE_SWAP)


class MutationError(ValueError):
    pass


@dataclass(frozen=True)
class MutationSpec:
    kind: MutationKind
    magnitude: int
    seed: int
    protected: frozenset = frozenset()

    def __post_init__(self):
        if self.magnitude < 1:
            raise ValueError("magnitude must be >= 1")


@dataclass(frozen=True)
class MutationEdit:
    kind: MutationKind
    target: str
    before: str
    after: str

    def as_dict(self) -> dict:
        return {"kind": self.kind.value, "target": self.target,
                "before": self.before, "after": self.after}


@dataclass(frozen=True)
class MutationRecord:
    edits: tuple[MutationEdit, ...]
    touched_gates: int

    def __len__(self):
        return len(self.edits)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.as_dict()) + "\n" for e in self.edits)


class _Work:
    """Mutable copy of a netlist's gate graph for incremental editing."""

    def __init__(self, netlist: Netlist):
        self.names = list(netlist.net_names)
        self.name_set = set(self.names)
        self.gates = list(netlist.gates)
        self.driver = list(netlist.driver)
        self.readers = [set(r) for r in netlist.readers]

    def text(self, gi: int) -> str:
        g = self.gates[gi]
        return f"{self.names[g.output]} = {g.function.bench_token}({', '.join(self.names[i] for i in g.inputs)})"

    def replace(self, gi: int, new: Gate) -> None:
        old = self.gates[gi]
        for i in set(old.inputs) - set(new.inputs):
            self.readers[i].discard(gi)
        for i in new.inputs:
            self.readers[i].add(gi)
        self.gates[gi] = new

    def fresh(self, base: str) -> NetId:
        k = 0
        while f"{base}__tj{k}" in self.name_set:
            k += 1
        name = f"{base}__tj{k}"
        self.names.append(name)
        self.name_set.add(name)
        self.driver.append(-1)
        self.readers.append(set())
        return len(self.names) - 1

    def fanout(self, net: NetId) -> set[NetId]:
        """``net`` and every net it transitively drives."""
        seen = {net}
        stack = [net]
        while stack:
            for gi in self.readers[stack.pop()]:
                o = self.gates[gi].output
                if o not in seen:
                    seen.add(o)
                    stack.append(o)
        return seen


def mutate(netlist: Netlist, spec: MutationSpec) -> tuple[Netlist, MutationRecord]:
    """Apply ``spec.magnitude`` edits, each to a distinct unprotected gate.

    Returns the mutated netlist (re-validated) and an audit record. Nets in
    ``spec.protected`` and the gates driving them are never touched.
    """
    rng = np.random.default_rng(spec.seed)
    work = _Work(netlist)
    protected = set(spec.protected)
    touched: set[int] = set()
    edits = []

    def eligible(pred=lambda g: True) -> list[int]:
        return [gi for gi, g in enumerate(work.gates)
                if gi not in touched and g.output not in protected and pred(g)]

    for _ in range(spec.magnitude):
        kind = spec.kind
        if kind is MutationKind.MIXED:
            kind = _CONCRETE[int(rng.integers(len(_CONCRETE)))]
        edit = _EDITORS[kind](work, rng, eligible, protected, touched)
        edits.append(edit)

    # the inserted gates are appended; net order of the original stays valid
    mutated = Netlist(name=netlist.name, net_names=tuple(work.names),
                      primary_inputs=netlist.primary_inputs,
                      primary_outputs=netlist.primary_outputs, gates=tuple(work.gates),
                      state_elements=netlist.state_elements)
    return mutated, MutationRecord(tuple(edits), len(touched))


def _pick(rng, pool, what):
    if not pool:
        raise MutationError(f"no eligible gates left for {what}")
    return pool[int(rng.integers(len(pool)))]


def _substitute(work, rng, eligible, protected, touched):
    gi = _pick(rng, eligible(), "substitution")
    g = work.gates[gi]
    if g.function.is_unary:
        choices = [f for f in (GateFunction.NOT, GateFunction.BUF) if f is not g.function]
    else:
        choices = [f for f in _MULTI if f is not g.function]
    new_f = choices[int(rng.integers(len(choices)))]
    before = work.text(gi)
    work.replace(gi, Gate(g.output, new_f, g.inputs))
    touched.add(gi)
    return MutationEdit(MutationKind.GATE_TYPE_SUBSTITUTION, work.names[g.output], before, work.text(gi))


def _remove(work, rng, eligible, protected, touched):
    gi = _pick(rng, eligible(lambda g: g.function is not GateFunction.BUF), "removal")
    g = work.gates[gi]
    before = work.text(gi)
    work.replace(gi, Gate(g.output, GateFunction.BUF, (g.inputs[0],)))
    touched.add(gi)
    return MutationEdit(MutationKind.GATE_REMOVAL, work.names[g.output], before, work.text(gi))


def _insert(work, rng, eligible, protected, touched):
    pool = eligible()
    all_nets = len(work.names)
    for _ in range(MAX_RETRIES):
        gi = _pick(rng, pool, "insertion")
        g = work.gates[gi]
        target = g.output
        banned = work.fanout(target) | protected
        m = int(rng.integers(all_nets))
        if m in banned:
            continue
        func = _SPLICE[int(rng.integers(len(_SPLICE)))]
        before = work.text(gi)
        # the old driver moves to a fresh net; the spliced gate takes the name
        pre = work.fresh(work.names[target])
        work.replace(gi, Gate(pre, g.function, g.inputs))
        work.driver[pre] = gi
        work.gates.append(Gate(target, func, (pre, m)))
        ng = len(work.gates) - 1
        work.driver[target] = ng
        work.readers[pre].add(ng)
        work.readers[m].add(ng)
        touched.update((gi, ng))
        return MutationEdit(MutationKind.GATE_INSERTION, work.names[target], before,
                            f"{work.text(gi)}; {work.text(ng)}")
    raise MutationError("every insertion candidate would create a cycle")


def _swap(work, rng, eligible, protected, touched):
    pool = eligible()
    if len(pool) < 2:
        raise MutationError("wire swap needs two eligible gates")
    for _ in range(MAX_RETRIES):
        a, b = (pool[int(i)] for i in rng.choice(len(pool), size=2, replace=False))
        ga, gb = work.gates[a], work.gates[b]
        ia = int(rng.integers(len(ga.inputs)))
        ib = int(rng.integers(len(gb.inputs)))
        na, nb = ga.inputs[ia], gb.inputs[ib]
        if na == nb:
            continue
        # gate a will read nb and gate b will read na
        if nb in work.fanout(ga.output) or na in work.fanout(gb.output):
            continue
        before = f"{work.text(a)}; {work.text(b)}"
        ins_a = list(ga.inputs)
        ins_a[ia] = nb
        ins_b = list(gb.inputs)
        ins_b[ib] = na
        work.replace(a, Gate(ga.output, ga.function, tuple(ins_a)))
        work.replace(b, Gate(gb.output, gb.function, tuple(ins_b)))
        touched.update((a, b))
        return MutationEdit(MutationKind.WIRE_SWAP, f"{work.names[ga.output]},{work.names[gb.output]}",
                            before, f"{work.text(a)}; {work.text(b)}")
    raise MutationError("every wire-swap candidate would create a cycle")


_EDITORS = {
    MutationKind.GATE_TYPE_SUBSTITUTION: _substitute,
    MutationKind.GATE_INSERTION: _insert,
    MutationKind.GATE_REMOVAL: _remove,
    MutationKind.WIRE_SWAP: _swap,
}


class Equivalence(enum.Enum):
    CHANGED = "CHANGED"
    NOT_OBSERVED = "NOT_OBSERVED"
    PROVEN_EQUAL = "PROVEN_EQUAL"


def exhaustive_vectors(width: int) -> np.ndarray:
    """All ``2**width`` assignments; row ``r`` holds the bits of ``r``, MSB first."""
    r = np.arange(1 << width, dtype=np.int64)[:, None]
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)[None, :]
    return ((r >> shifts) & 1).astype(bool)


def is_functionally_changed(original: Netlist, mutated: Netlist, budget: int = 10_000,
                            seed: int = 0) -> Equivalence:
    """Compare the original (pseudo) outputs of two netlists by simulation."""
    on, mn = original.net_names, mutated.net_names
    o_in = [on[i] for i in original.effective_inputs]
    m_in = [mn[i] for i in mutated.effective_inputs]
    if sorted(o_in) != sorted(m_in):
        raise ValueError("netlists have different effective inputs")
    outs = [on[i] for i in original.effective_outputs]
    try:
        m_outs = [mutated.net(o) for o in outs]
    except KeyError as exc:
        raise ValueError(f"mutated netlist lacks an original output: {exc}") from None
    width = original.input_width
    exhaustive = width <= EXHAUSTIVE_LIMIT
    bits = exhaustive_vectors(width) if exhaustive else generate_vectors(width, budget, seed).bits
    pos = {n: j for j, n in enumerate(o_in)}
    perm = [pos[n] for n in m_in]
    a = evaluate(original, bits, original.effective_outputs)
    b = evaluate(mutated, bits[:, perm], m_outs)
    if not np.array_equal(a, b):
        return Equivalence.CHANGED
    return Equivalence.PROVEN_EQUAL if exhaustive else Equivalence.NOT_OBSERVED


def digest_protection(netlist: Netlist, prefix: str = "SIGNED_DIGEST_") -> frozenset:
    """Nets belonging to inserted digest logic, recognised by name."""
    return frozenset(i for i, n in enumerate(netlist.net_names) if n.startswith(prefix))
