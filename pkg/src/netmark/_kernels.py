"""Hot loops: packed gate evaluation, popcounts and toggle counting.

Every kernel has a numba implementation and a pure-numpy twin with the same
signature. Set ``NETMARK_DISABLE_NUMBA=1`` to force the numpy path (numba is
also skipped when it fails to import). Both paths must agree bit for bit.
"""
import os

import numpy as np

# Opcodes match netlist.GateFunction values.
OP_AND, OP_NAND, OP_OR, OP_NOR, OP_XOR, OP_XNOR, OP_NOT, OP_BUF = range(8)

ALL_ONES = np.uint64(0xFFFFFFFFFFFFFFFF)


def _numba_wanted():
    return os.environ.get("NETMARK_DISABLE_NUMBA", "").strip().lower() not in ("1", "true", "yes")


# -- numpy implementations ---------------------------------------------------

def eval_gates_numpy(ops, outs, ptr, idx, values):
    """Evaluate gates in the given order over packed words, in place.

    ``values`` is ``(n_nets, n_words)`` uint64; gate ``g`` reads rows
    ``idx[ptr[g]:ptr[g+1]]`` and writes row ``outs[g]``.
    """
    for g in range(len(ops)):
        ins = idx[ptr[g]:ptr[g + 1]]
        op = ops[g]
        if op <= OP_NAND:
            acc = np.bitwise_and.reduce(values[ins], axis=0)
        elif op <= OP_NOR:
            acc = np.bitwise_or.reduce(values[ins], axis=0)
        elif op <= OP_XNOR:
            acc = np.bitwise_xor.reduce(values[ins], axis=0)
        else:
            acc = values[ins[0]].copy()
        if op in (OP_NAND, OP_NOR, OP_XNOR, OP_NOT):
            np.invert(acc, out=acc)
        values[outs[g]] = acc


def popcount_rows_numpy(words):
    """Set-bit count per row of a 2-D uint64 array."""
    return np.bitwise_count(words).sum(axis=1, dtype=np.int64)


def toggle_counts_numpy(values, first_bits, n_bits):
    """Per row: number of positions where a bit differs from its predecessor.

    The predecessor of bit 0 is ``first_bits[row]``; bits beyond ``n_bits``
    are ignored.
    """
    carry = np.empty_like(values)
    carry[:, 0] = first_bits.astype(np.uint64)
    carry[:, 1:] = values[:, :-1] >> np.uint64(63)
    shifted = (values << np.uint64(1)) | carry
    diff = shifted ^ values
    diff[:, -1] &= _tail_mask(n_bits)
    return popcount_rows_numpy(diff)


def hamming_to_row_numpy(words, row):
    return np.bitwise_count(words ^ row[None, :]).sum(axis=1, dtype=np.int64)


def _tail_mask(n_bits):
    rem = n_bits % 64
    return ALL_ONES if rem == 0 else np.uint64((1 << rem) - 1)


# -- numba implementations ---------------------------------------------------

_NUMBA = None

if _numba_wanted():
    try:
        import numba
        from numba import njit, prange
        # the bundled TBB is too old; avoid the probe warning
        numba.config.THREADING_LAYER = "workqueue"
        _NUMBA = numba
    except ImportError:  # pragma: no cover - numba is a hard dependency
        _NUMBA = None

if _NUMBA is not None:

    @njit(cache=True, inline="always")
    def _popcount64(x):
        x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
        x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
        x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
        return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)

    @njit(cache=True, parallel=True)
    def eval_gates_numba(ops, outs, ptr, idx, values):
        n_words = values.shape[1]
        block = 16
        n_blocks = (n_words + block - 1) // block
        for b in prange(n_blocks):
            lo = b * block
            hi = min(lo + block, n_words)
            for g in range(ops.shape[0]):
                op = ops[g]
                o = outs[g]
                s = ptr[g]
                e = ptr[g + 1]
                inv = op == OP_NAND or op == OP_NOR or op == OP_XNOR or op == OP_NOT
                for w in range(lo, hi):
                    acc = values[idx[s], w]
                    if op <= OP_NAND:
                        for k in range(s + 1, e):
                            acc &= values[idx[k], w]
                    elif op <= OP_NOR:
                        for k in range(s + 1, e):
                            acc |= values[idx[k], w]
                    elif op <= OP_XNOR:
                        for k in range(s + 1, e):
                            acc ^= values[idx[k], w]
                    if inv:
                        acc = ~acc
                    values[o, w] = acc

    @njit(cache=True)
    def popcount_rows_numba(words):
        out = np.zeros(words.shape[0], dtype=np.int64)
        for r in range(words.shape[0]):
            c = 0
            for w in range(words.shape[1]):
                c += _popcount64(words[r, w])
            out[r] = c
        return out

    @njit(cache=True)
    def _toggle_counts_numba(values, first_bits, tail_mask):
        n_rows, n_words = values.shape
        out = np.zeros(n_rows, dtype=np.int64)
        for r in range(n_rows):
            carry = np.uint64(first_bits[r])
            c = 0
            for w in range(n_words):
                v = values[r, w]
                d = ((v << np.uint64(1)) | carry) ^ v
                if w == n_words - 1:
                    d &= tail_mask
                c += _popcount64(d)
                carry = v >> np.uint64(63)
            out[r] = c
        return out

    def toggle_counts_numba(values, first_bits, n_bits):
        return _toggle_counts_numba(values, first_bits.astype(np.uint8), _tail_mask(n_bits))

    @njit(cache=True)
    def hamming_to_row_numba(words, row):
        out = np.zeros(words.shape[0], dtype=np.int64)
        for r in range(words.shape[0]):
            c = 0
            for w in range(words.shape[1]):
                c += _popcount64(words[r, w] ^ row[w])
            out[r] = c
        return out

    BACKEND = "numba"
    eval_gates = eval_gates_numba
    popcount_rows = popcount_rows_numba
    toggle_counts = toggle_counts_numba
    hamming_to_row = hamming_to_row_numba
else:
    BACKEND = "numpy"
    eval_gates = eval_gates_numpy
    popcount_rows = popcount_rows_numpy
    toggle_counts = toggle_counts_numpy
    hamming_to_row = hamming_to_row_numpy


def set_threads(n):
    """Set the worker count for parallel kernels; 0 leaves numba's default."""
    if _NUMBA is not None and n:
        _NUMBA.set_num_threads(min(int(n), _NUMBA.config.NUMBA_NUM_THREADS))
