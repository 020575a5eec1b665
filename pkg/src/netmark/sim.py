"""Seeded random vectors and bit-parallel two-valued logic simulation.

Vectors are packed 64 per machine word: bit ``l`` of word ``w`` of a net's
row is the net's value under vector ``64*w + l``. Lanes past the last vector
are kept at zero.

Random vectors come from SplitMix64 (Steele, Lea & Flood 2014) used as a
counter-based generator: output ``k`` (1-based) is ``mix(seed + k*0x9E3779B97F4A7C15)``.
Vector ``i`` of width ``W`` consumes outputs ``i*ceil(W/64)+1 ..``; input bit
``b`` is bit ``b % 64`` of the ``b // 64``-th of those words.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import _kernels
from .netlist import Netlist, NetId

MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Outputs ``start+1 .. start+count`` of the SplitMix64 stream for ``seed``."""
    k = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & MASK64) + _GOLDEN * k
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


@dataclass(frozen=True, eq=False)
class RandomVectorSet:
    seed: int
    bits: np.ndarray  # (count, width) bool

    @property
    def count(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def __len__(self):
        return self.count

    def __getitem__(self, i):
        return self.bits[i]


def generate_vectors(netlist: Union[Netlist, int], count: int, seed: int) -> RandomVectorSet:
    """``count`` uniform vectors over the effective inputs, reproducible by seed."""
    if count < 1:
        raise ValueError("vector count must be >= 1")
    width = netlist if isinstance(netlist, int) else netlist.input_width
    words_per = max(1, -(-width // 64))
    raw = splitmix64(seed, count * words_per).reshape(count, words_per)
    as_bytes = raw.astype("<u8").view(np.uint8).reshape(count, words_per * 8)
    bits = np.unpackbits(as_bytes, axis=1, bitorder="little")[:, :width].astype(bool)
    return RandomVectorSet(seed=seed, bits=bits)


def pack_lanes(bits: np.ndarray) -> np.ndarray:
    """``(count, width)`` bools -> ``(width, n_words)`` uint64 lane words."""
    bits = np.asarray(bits, dtype=bool)
    count, width = bits.shape
    n_words = max(1, -(-count // 64))
    padded = np.zeros((width, n_words * 64), dtype=bool)
    padded[:, :count] = bits.T
    packed = np.packbits(padded, axis=1, bitorder="little")
    return packed.view("<u8").astype(np.uint64, copy=False).reshape(width, n_words)


def unpack_lanes(words: np.ndarray, count: int) -> np.ndarray:
    """``(rows, n_words)`` uint64 -> ``(rows, count)`` bools."""
    words = np.ascontiguousarray(words, dtype="<u8")
    as_bytes = words.view(np.uint8).reshape(words.shape[0], -1)
    return np.unpackbits(as_bytes, axis=1, bitorder="little", count=count).astype(bool)


@dataclass(frozen=True)
class _Program:
    ops: np.ndarray
    outs: np.ndarray
    ptr: np.ndarray
    idx: np.ndarray


def _program(netlist: Netlist) -> _Program:
    prog = netlist._cache.get("sim_program")
    if prog is None:
        order = netlist.gate_order
        gates = [netlist.gates[i] for i in order]
        ptr = np.zeros(len(gates) + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(g.inputs) for g in gates])
        prog = _Program(
            ops=np.array([int(g.function) for g in gates], dtype=np.int8),
            outs=np.array([g.output for g in gates], dtype=np.int64),
            ptr=ptr,
            idx=np.array([i for g in gates for i in g.inputs], dtype=np.int64),
        )
        netlist._cache["sim_program"] = prog
    return prog


def simulate_words(netlist: Netlist, input_words: np.ndarray) -> np.ndarray:
    """Propagate packed effective-input words; returns ``(net_count, n_words)``."""
    inputs = np.asarray(netlist.effective_inputs, dtype=np.int64)
    if input_words.shape[0] != len(inputs):
        raise ValueError(f"vector width {input_words.shape[0]} != effective input "
                         f"count {len(inputs)} of {netlist.name}")
    values = np.zeros((netlist.net_count, input_words.shape[1]), dtype=np.uint64)
    values[inputs] = input_words
    p = _program(netlist)
    _kernels.eval_gates(p.ops, p.outs, p.ptr, p.idx, values)
    return values


@dataclass(frozen=True, eq=False)
class TraceMatrix:
    """Per-net value traces: logically ``(n_vectors, n_nets)`` booleans.

    Stored net-major and packed (``packed[net, word]``). ``default_row`` is
    the simulated all-zeros vector, the transition baseline for row 0.
    """

    packed: np.ndarray
    n_vectors: int
    default_row: np.ndarray
    net_names: tuple = field(default=(), repr=False)

    @classmethod
    def from_array(cls, values, default=None) -> "TraceMatrix":
        """Wrap a ``(n_vectors, n_nets)`` bool array; default row is all zeros unless given."""
        values = np.asarray(values, dtype=bool)
        base = np.zeros(values.shape[1], dtype=bool) if default is None else np.asarray(default, bool)
        return cls(pack_lanes(values), values.shape[0], base)

    @property
    def n_nets(self) -> int:
        return self.packed.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_vectors, self.n_nets)

    def column(self, net: NetId) -> np.ndarray:
        self._check_net(net)
        return unpack_lanes(self.packed[net:net + 1], self.n_vectors)[0]

    def columns(self, nets) -> np.ndarray:
        """``(len(nets), n_vectors)`` bools."""
        return unpack_lanes(self.packed[np.asarray(nets, dtype=np.int64)], self.n_vectors)

    def row(self, i) -> np.ndarray:
        if i is None or i == "default":
            return self.default_row.copy()
        if not 0 <= i < self.n_vectors:
            raise IndexError(f"row {i} out of range 0..{self.n_vectors - 1}")
        w, b = divmod(i, 64)
        return ((self.packed[:, w] >> np.uint64(b)) & np.uint64(1)).astype(bool)

    def to_array(self) -> np.ndarray:
        return unpack_lanes(self.packed, self.n_vectors).T

    def _check_net(self, net):
        if not 0 <= net < self.n_nets:
            raise IndexError(f"NetId {net} out of range 0..{self.n_nets - 1}")


def _mask_tail(words: np.ndarray, count: int) -> None:
    rem = count % 64
    if rem:
        words[:, -1] &= np.uint64((1 << rem) - 1)


def default_row(netlist: Netlist) -> np.ndarray:
    zeros = np.zeros((netlist.input_width, 1), dtype=np.uint64)
    return (simulate_words(netlist, zeros)[:, 0] & np.uint64(1)).astype(bool)


def simulate(netlist: Netlist, vectors) -> TraceMatrix:
    """Simulate every vector; entry ``(i, j)`` is net ``j`` under vector ``i``.

    ``vectors`` is a :class:`RandomVectorSet` or a ``(count, width)`` bool array.
    """
    bits = vectors.bits if isinstance(vectors, RandomVectorSet) else np.asarray(vectors, dtype=bool)
    if bits.ndim != 2 or bits.shape[1] != netlist.input_width:
        raise ValueError(f"vector width {bits.shape[-1]} != effective input count "
                         f"{netlist.input_width} of {netlist.name}")
    values = simulate_words(netlist, pack_lanes(bits))
    _mask_tail(values, bits.shape[0])
    return TraceMatrix(values, bits.shape[0], default_row(netlist), netlist.net_names)


def evaluate(netlist: Netlist, bits: np.ndarray, nets=None) -> np.ndarray:
    """Values of ``nets`` (default: all) under each vector, ``(count, len(nets))``."""
    bits = np.atleast_2d(np.asarray(bits, dtype=bool))
    trace = simulate(netlist, bits)
    sel = trace.packed if nets is None else trace.packed[np.asarray(nets, dtype=np.int64)]
    return unpack_lanes(sel, bits.shape[0]).T


@dataclass(frozen=True, eq=False)
class ActivityProfile:
    toggles: np.ndarray  # per net, transitions counted
    transitions: int  # denominator: pairs considered

    @property
    def sw(self) -> np.ndarray:
        return self.toggles / self.transitions

    @property
    def constant(self) -> np.ndarray:
        return self.toggles == 0


def activity(trace: TraceMatrix, default: Optional[np.ndarray] = None) -> ActivityProfile:
    """Switching activity over (default, row 0), (row 0, row 1), ..."""
    base = trace.default_row if default is None else np.asarray(default, dtype=bool)
    counts = _kernels.toggle_counts(trace.packed, base, trace.n_vectors)
    return ActivityProfile(np.asarray(counts, dtype=np.int64), trace.n_vectors)


def toggled_nets(trace: TraceMatrix, row_a, row_b, nets) -> set[NetId]:
    """Members of ``nets`` whose value differs between two rows (``None`` = default row)."""
    nets = list(nets)
    for n in nets:
        trace._check_net(n)
    a = trace.row(row_a)
    b = trace.row(row_b)
    return {n for n in nets if a[n] != b[n]}


def toggle_matrix(trace: TraceMatrix, nets) -> np.ndarray:
    """``(n_vectors, len(nets))``: does net toggle entering row i (row -1 = default)."""
    cols = trace.columns(nets)
    prev = np.empty_like(cols)
    prev[:, 0] = trace.default_row[np.asarray(nets, dtype=np.int64)] if len(nets) else False
    prev[:, 1:] = cols[:, :-1]
    return (cols != prev).T


# -- binary trace dump --------------------------------------------------------
#
# Layout (little endian):
#   bytes 0..7    magic b"NMTRACE1"
#   bytes 8..11   uint32 net count (columns)
#   bytes 12..15  uint32 vector count (rows)
#   then rows in vector order; each row is ceil(nets/8) bytes and holds net j
#   at bit (j % 8) of byte (j // 8), least significant bit first.

TRACE_MAGIC = b"NMTRACE1"


def write_trace(path, trace: TraceMatrix) -> None:
    rows = np.packbits(trace.to_array(), axis=1, bitorder="little")
    with open(path, "wb") as fh:
        fh.write(TRACE_MAGIC)
        fh.write(struct.pack("<II", trace.n_nets, trace.n_vectors))
        fh.write(rows.tobytes())


def read_trace(path) -> np.ndarray:
    """Load a dump back as ``(n_vectors, n_nets)`` bools."""
    data = Path(path).read_bytes()
    if data[:8] != TRACE_MAGIC:
        raise ValueError(f"{path}: not a trace dump")
    n_nets, n_vec = struct.unpack("<II", data[8:16])
    row_bytes = -(-n_nets // 8)
    body = np.frombuffer(data, dtype=np.uint8, offset=16).reshape(n_vec, row_bytes)
    return np.unpackbits(body, axis=1, bitorder="little", count=n_nets).astype(bool)
