"""Gate-level netlists: representation, ``.bench`` I/O and structural queries.

Nets are identified by dense integer handles (``NetId``) assigned in order of
first appearance. Flip-flops are cut under the full-scan assumption: each
``DFF`` contributes a pseudo primary input (its Q net) and a pseudo primary
output (its D net), so the remaining gate graph is purely combinational.
"""
from __future__ import annotations

import enum
import re
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

NetId = int


class GateFunction(enum.IntEnum):
    AND = 0
    NAND = 1
    OR = 2
    NOR = 3
    XOR = 4
    XNOR = 5
    NOT = 6
    BUF = 7

    @property
    def is_unary(self) -> bool:
        return self in (GateFunction.NOT, GateFunction.BUF)

    @property
    def inverting(self) -> bool:
        return self in (GateFunction.NAND, GateFunction.NOR, GateFunction.XNOR, GateFunction.NOT)

    def arity_ok(self, n: int) -> bool:
        return n == 1 if self.is_unary else n >= 2

    def evaluate(self, values: Sequence[bool]) -> bool:
        """Scalar truth-table evaluation."""
        if self in (GateFunction.AND, GateFunction.NAND):
            out = all(values)
        elif self in (GateFunction.OR, GateFunction.NOR):
            out = any(values)
        elif self in (GateFunction.XOR, GateFunction.XNOR):
            out = sum(bool(v) for v in values) % 2 == 1
        else:
            out = bool(values[0])
        return (not out) if self.inverting else out

    @property
    def bench_token(self) -> str:
        return "BUFF" if self is GateFunction.BUF else self.name


BENCH_TOKENS = {f.bench_token: f for f in GateFunction}
BENCH_TOKENS["BUF"] = GateFunction.BUF


class NetlistError(ValueError):
    """Structural violation: undriven/multiply-driven net, bad arity, cycle."""


class BenchSyntaxError(NetlistError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class CycleError(NetlistError):
    def __init__(self, net_name: str):
        super().__init__(f"combinational cycle through net {net_name!r}")
        self.net = net_name


@dataclass(frozen=True)
class Gate:
    output: NetId
    function: GateFunction
    inputs: tuple[NetId, ...]


@dataclass(frozen=True, eq=False)
class Netlist:
    """Immutable gate-level netlist; validated on construction.

    ``state_elements`` holds ``(d, q)`` net pairs. Under full scan the Q nets
    are extra inputs and the D nets extra outputs of the combinational core.
    """

    name: str
    net_names: tuple[str, ...]
    primary_inputs: tuple[NetId, ...]
    primary_outputs: tuple[NetId, ...]
    gates: tuple[Gate, ...]
    state_elements: tuple[tuple[NetId, NetId], ...] = ()
    comments: tuple[str, ...] = field(default=(), repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._validate()

    # -- validation -------------------------------------------------------
    def _validate(self) -> None:
        n = len(self.net_names)
        if len(set(self.net_names)) != n:
            seen = set()
            dup = next(x for x in self.net_names if x in seen or seen.add(x))
            raise NetlistError(f"duplicate net name {dup!r}")

        def check(net):
            if not (isinstance(net, int) and 0 <= net < n):
                raise NetlistError(f"invalid NetId {net!r}")

        drivers = [0] * n
        for net in self.primary_inputs:
            check(net)
            drivers[net] += 1
        for d, q in self.state_elements:
            check(d)
            check(q)
            drivers[q] += 1
        for g in self.gates:
            check(g.output)
            for i in g.inputs:
                check(i)
            if not g.function.arity_ok(len(g.inputs)):
                raise NetlistError(
                    f"{g.function.name} gate driving {self.net_names[g.output]!r} "
                    f"has {len(g.inputs)} inputs")
            drivers[g.output] += 1
        for net in self.primary_outputs:
            check(net)
        undriven = [self.net_names[i] for i, c in enumerate(drivers) if c == 0]
        if undriven:
            raise NetlistError(f"undriven nets: {', '.join(undriven[:10])}"
                               + (" ..." if len(undriven) > 10 else ""))
        multi = [self.net_names[i] for i, c in enumerate(drivers) if c > 1]
        if multi:
            raise NetlistError(f"multiply-driven nets: {', '.join(multi[:10])}")
        self.gate_order  # raises CycleError

    # -- basic queries ----------------------------------------------------
    @property
    def net_count(self) -> int:
        return len(self.net_names)

    @property
    def gate_count(self) -> int:
        return len(self.gates)

    @cached_property
    def name_to_id(self) -> dict[str, NetId]:
        return {name: i for i, name in enumerate(self.net_names)}

    def net(self, name: str) -> NetId:
        try:
            return self.name_to_id[name]
        except KeyError:
            raise KeyError(f"no net named {name!r} in {self.name}") from None

    def check_net(self, net: NetId) -> None:
        if not (isinstance(net, (int,)) and 0 <= net < self.net_count):
            raise IndexError(f"NetId {net!r} out of range 0..{self.net_count - 1}")

    @property
    def effective_inputs(self) -> tuple[NetId, ...]:
        """Primary inputs followed by scan-cell Q nets."""
        return self.primary_inputs + tuple(q for _, q in self.state_elements)

    @property
    def effective_outputs(self) -> tuple[NetId, ...]:
        """Primary outputs followed by scan-cell D nets."""
        return self.primary_outputs + tuple(d for d, _ in self.state_elements)

    @property
    def input_width(self) -> int:
        return len(self.primary_inputs) + len(self.state_elements)

    @cached_property
    def driver(self) -> list[int]:
        """Per net: index of the driving gate, or -1 for (pseudo) inputs."""
        drv = [-1] * self.net_count
        for gi, g in enumerate(self.gates):
            drv[g.output] = gi
        return drv

    @cached_property
    def readers(self) -> list[list[int]]:
        """Per net: indices of the gates reading it (with multiplicity removed)."""
        rd: list[list[int]] = [[] for _ in range(self.net_count)]
        for gi, g in enumerate(self.gates):
            for i in dict.fromkeys(g.inputs):
                rd[i].append(gi)
        return rd

    @cached_property
    def gate_order(self) -> tuple[int, ...]:
        """Gate indices in a dependency-respecting order (Kahn, FIFO)."""
        pending = [len(set(g.inputs)) for g in self.gates]
        ready = deque()
        for net in self.effective_inputs:
            ready.append(net)
        order = []
        readers = self.readers
        while ready:
            net = ready.popleft()
            for gi in readers[net]:
                pending[gi] -= 1
                if pending[gi] == 0:
                    order.append(gi)
                    ready.append(self.gates[gi].output)
        if len(order) != len(self.gates):
            raise CycleError(self.net_names[self._find_cycle_net(pending)])
        return tuple(order)

    def _find_cycle_net(self, pending: list[int]) -> NetId:
        # walk backwards through unresolved gates until a net repeats
        drv = self.driver
        gi = next(i for i, p in enumerate(pending) if p > 0)
        seen = set()
        while True:
            out = self.gates[gi].output
            if out in seen:
                return out
            seen.add(out)
            gi = next(drv[i] for i in self.gates[gi].inputs
                      if drv[i] >= 0 and pending[drv[i]] > 0)

    # -- comparison -------------------------------------------------------
    def canonical(self) -> tuple:
        """Name-based structural form, independent of NetId and gate order."""
        nm = self.net_names
        return (
            tuple(nm[i] for i in self.primary_inputs),
            tuple(nm[i] for i in self.primary_outputs),
            frozenset((nm[g.output], g.function, tuple(nm[i] for i in g.inputs))
                      for g in self.gates),
            frozenset((nm[d], nm[q]) for d, q in self.state_elements),
        )

    def structurally_equal(self, other: "Netlist") -> bool:
        return self.canonical() == other.canonical()

    def __repr__(self):
        return (f"Netlist({self.name!r}, nets={self.net_count}, gates={self.gate_count}, "
                f"pi={len(self.primary_inputs)}, po={len(self.primary_outputs)}, "
                f"dff={len(self.state_elements)})")


def levelize(netlist: Netlist) -> list[NetId]:
    """Topological order over all nets: inputs first, every gate after its fan-in."""
    order = list(netlist.effective_inputs)
    order.extend(netlist.gates[gi].output for gi in netlist.gate_order)
    return order


def fanin_cone_size(netlist: Netlist, net: NetId) -> int:
    """Number of distinct gates in the transitive fan-in of ``net``."""
    netlist.check_net(net)
    drv = netlist.driver
    seen = set()
    stack = [net]
    while stack:
        gi = drv[stack.pop()]
        if gi < 0 or gi in seen:
            continue
        seen.add(gi)
        stack.extend(netlist.gates[gi].inputs)
    return len(seen)


def fanin_cone_sizes(netlist: Netlist) -> list[int]:
    """Cone sizes of every net at once, via per-net gate bitsets."""
    cache = netlist._cache
    if "cone_sizes" not in cache:
        cones = [0] * netlist.net_count
        for gi in netlist.gate_order:
            g = netlist.gates[gi]
            acc = 1 << gi
            for i in g.inputs:
                acc |= cones[i]
            cones[g.output] = acc
        cache["cone_sizes"] = [c.bit_count() for c in cones]
    return list(cache["cone_sizes"])


def immediate_fanin(netlist: Netlist) -> list[int]:
    """Number of inputs of each net's driving gate (0 for inputs)."""
    out = [0] * netlist.net_count
    for g in netlist.gates:
        out[g.output] = len(g.inputs)
    return out


# -- .bench I/O -------------------------------------------------------------

_IO_RE = re.compile(r"^(INPUT|OUTPUT)\s*\(\s*([^()\s,]+)\s*\)$", re.IGNORECASE)
_GATE_RE = re.compile(r"^([^=\s]+)\s*=\s*([A-Za-z_]+)\s*\(([^()]*)\)$")
_NAME_RE = re.compile(r"^[^\s(),=#]+$")


def parse_bench(text: str, name: str = "netlist") -> Netlist:
    """Parse ISCAS ``.bench`` text into a :class:`Netlist`.

    Raises :class:`BenchSyntaxError` for malformed lines and unknown gate
    tokens, :class:`NetlistError` for driver violations and
    :class:`CycleError` for combinational loops.
    """
    ids: dict[str, int] = {}
    names: list[str] = []

    def nid(n: str) -> int:
        i = ids.get(n)
        if i is None:
            i = ids[n] = len(names)
            names.append(n)
        return i

    pis, pos, gates, dffs, comments = [], [], [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        col = len(raw) - len(raw.lstrip()) + 1
        hash_at = raw.find("#")
        if hash_at >= 0:
            comments.append(raw[hash_at + 1:].strip())
            stripped = raw[:hash_at].strip()
        if not stripped:
            continue
        m = _IO_RE.match(stripped)
        if m:
            (pis if m.group(1).upper() == "INPUT" else pos).append(nid(m.group(2)))
            continue
        m = _GATE_RE.match(stripped)
        if not m:
            raise BenchSyntaxError(f"cannot parse {stripped!r}", lineno, col)
        out_name, token, args = m.group(1), m.group(2), m.group(3)
        arg_names = [a.strip() for a in args.split(",")] if args.strip() else []
        for a in arg_names:
            if not _NAME_RE.match(a):
                raise BenchSyntaxError(f"bad net name {a!r}", lineno,
                                       raw.find(args) + 1 if args else col)
        token_u = token.upper()
        if token_u == "DFF":
            if len(arg_names) != 1:
                raise BenchSyntaxError("DFF takes exactly one input", lineno, col)
            q = nid(out_name)
            dffs.append((nid(arg_names[0]), q))
            continue
        func = BENCH_TOKENS.get(token_u)
        if func is None:
            raise BenchSyntaxError(f"unknown function {token!r}", lineno, raw.find(token) + 1)
        if not func.arity_ok(len(arg_names)):
            raise BenchSyntaxError(f"{token_u} with {len(arg_names)} inputs", lineno, col)
        out = nid(out_name)
        gates.append(Gate(out, func, tuple(nid(a) for a in arg_names)))
    return Netlist(name=name, net_names=tuple(names), primary_inputs=tuple(pis),
                   primary_outputs=tuple(pos), gates=tuple(gates),
                   state_elements=tuple(dffs), comments=tuple(comments))


def read_bench(path) -> Netlist:
    from pathlib import Path

    p = Path(path)
    return parse_bench(p.read_text(), name=p.stem)


def serialize_bench(netlist: Netlist, header: bool = True) -> str:
    """Emit ``.bench`` text; ``header=False`` drops the ``# name`` comment."""
    nm = netlist.net_names
    lines = [f"# {netlist.name}"] if header else []
    lines += [f"INPUT({nm[i]})" for i in netlist.primary_inputs]
    lines += [f"OUTPUT({nm[i]})" for i in netlist.primary_outputs]
    lines += [f"{nm[q]} = DFF({nm[d]})" for d, q in netlist.state_elements]
    for g in netlist.gates:
        lines.append(f"{nm[g.output]} = {g.function.bench_token}({', '.join(nm[i] for i in g.inputs)})")
    return "\n".join(lines) + "\n"


def build(name: str, inputs: Iterable[str], outputs: Iterable[str],
          gates: Iterable[tuple[str, str, Sequence[str]]],
          dffs: Iterable[tuple[str, str]] = ()) -> Netlist:
    """Construct a netlist from names; ``gates`` holds ``(out, FUNC, ins)``."""
    text = [f"INPUT({i})" for i in inputs] + [f"OUTPUT({o})" for o in outputs]
    text += [f"{q} = DFF({d})" for d, q in dffs]
    text += [f"{o} = {f}({', '.join(ins)})" for o, f, ins in gates]
    return parse_bench("\n".join(text), name=name)
