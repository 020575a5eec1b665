import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netmark import _kernels
from netmark.sim import (TraceMatrix, activity, evaluate, generate_vectors, pack_lanes,
                         read_trace, simulate, splitmix64, toggle_matrix, toggled_nets,
                         unpack_lanes, write_trace)
from netmark.netlist import parse_bench
from netmark.tamper import exhaustive_vectors

from conftest import load, small_circuits
from oracles import eval_rows, toggles_scalar

# net19 circuit evaluated by hand, nets N1..N19
HAND_00000 = "00000" "11111" "1" "1" "0" "0" "0" "0" "1" "1" "0"
HAND_11111 = "11111" "00011" "0" "1" "0" "0" "0" "1" "0" "1" "1"


def test_splitmix64_reference_output():
    assert int(splitmix64(0, 1)[0]) == 0xE220A8397B1DCDAF


def test_splitmix64_offsets_are_consistent():
    whole = splitmix64(1234, 10)
    assert np.array_equal(whole[4:], splitmix64(1234, 6, start=4))


def test_vectors_deterministic_and_seed_sensitive():
    a = generate_vectors(70, 300, seed=9)
    b = generate_vectors(70, 300, seed=9)
    c = generate_vectors(70, 300, seed=10)
    assert np.array_equal(a.bits, b.bits)
    assert not np.array_equal(a.bits, c.bits)
    assert a.bits.shape == (300, 70)


def test_vector_bits_are_balanced():
    v = generate_vectors(178, 10_000, seed=1)
    freq = v.bits.mean(axis=0)
    assert freq.min() >= 0.47 and freq.max() <= 0.53


def test_vector_layout_matches_generator_words():
    v = generate_vectors(3, 2, seed=5)
    words = splitmix64(5, 2)
    for i in range(2):
        assert [bool((int(words[i]) >> b) & 1) for b in range(3)] == list(v.bits[i])


def test_pack_unpack_round_trip():
    rng = np.random.default_rng(0)
    bits = rng.random((131, 7)) < 0.5
    packed = pack_lanes(bits)
    assert packed.shape == (7, 3)
    assert np.array_equal(unpack_lanes(packed, 131).T, bits)


def test_and_gate_truth_table(and_gate):
    out = evaluate(and_gate, exhaustive_vectors(2), [and_gate.net("y")])[:, 0]
    assert list(out) == [False, False, False, True]


def test_xor_with_own_inverse_is_constant_one():
    n = parse_bench("INPUT(a)\nOUTPUT(y)\nb = NOT(a)\ny = XOR(a, b)\n")
    trace = simulate(n, generate_vectors(n, 100, seed=3))
    assert trace.column(n.net("y")).all()
    assert activity(trace).sw[n.net("y")] == 0.0
    assert activity(trace).constant[n.net("y")]


def test_net19_hand_values(net19):
    vecs = np.array([[0] * 5, [1] * 5], dtype=bool)
    rows = evaluate(net19, vecs)
    order = [net19.net(f"N{i}") for i in range(1, 20)]
    as_text = ["".join("1" if b else "0" for b in r[order]) for r in rows]
    assert as_text == [HAND_00000, HAND_11111]


def test_default_row_is_all_zero_vector(net19):
    trace = simulate(net19, np.array([[1, 1, 1, 1, 1]], dtype=bool))
    order = [net19.net(f"N{i}") for i in range(1, 20)]
    assert "".join("1" if b else "0" for b in trace.row(None)[order]) == HAND_00000


def test_toggled_nets_net19(net19):
    vecs = np.array([[0, 0, 0, 0, 0], [1, 1, 1, 1, 1], [1, 0, 0, 0, 0]], dtype=bool)
    trace = simulate(net19, vecs)
    pair = [net19.net("N11"), net19.net("N19")]
    assert toggled_nets(trace, None, 0, pair) == set()
    assert toggled_nets(trace, 0, 1, pair) == set(pair)
    assert toggled_nets(trace, 0, 2, pair) == set()
    assert toggled_nets(trace, 1, 2, pair) == set(pair)
    with pytest.raises(IndexError):
        toggled_nets(trace, 0, 1, [99])
    with pytest.raises(IndexError):
        trace.row(3)


def test_activity_hand_example():
    cols = np.array([[1, 0], [0, 0], [1, 0], [1, 1]], dtype=bool)
    act = activity(TraceMatrix.from_array(cols))
    assert act.toggles.tolist() == [3, 1]
    assert act.sw.tolist() == [0.75, 0.25]


def test_toggle_matrix_matches_activity(net19):
    trace = simulate(net19, generate_vectors(net19, 500, seed=4))
    tm = toggle_matrix(trace, range(net19.net_count))
    assert np.array_equal(tm.sum(axis=0), activity(trace).toggles)


@pytest.mark.parametrize("netlist", small_circuits(), ids=lambda n: n.name)
def test_exhaustive_truth_tables(netlist):
    bits = exhaustive_vectors(netlist.input_width)
    assert np.array_equal(evaluate(netlist, bits), eval_rows(netlist, bits))


@pytest.mark.parametrize("netlist", [n for n in small_circuits() if n.gate_count <= 64],
                         ids=lambda n: n.name)
def test_packed_matches_scalar_on_random_vectors(netlist):
    vecs = generate_vectors(netlist, 1000, seed=17)
    trace = simulate(netlist, vecs)
    ref = eval_rows(netlist, vecs.bits)
    assert np.array_equal(trace.to_array(), ref)
    act = activity(trace)
    for net in range(netlist.net_count):
        assert act.toggles[net] == toggles_scalar(ref[:, net], trace.default_row[net])


def test_large_circuit_rows_match_scalar():
    n = load("c5315")
    vecs = generate_vectors(n, 130, seed=2)
    trace = simulate(n, vecs)
    for i in (0, 63, 64, 129):
        assert np.array_equal(trace.row(i), eval_rows(n, vecs.bits[i:i + 1])[0])


def test_width_mismatch_rejected(net19):
    with pytest.raises(ValueError, match="width"):
        simulate(net19, np.zeros((3, 4), dtype=bool))


def test_trace_dump_round_trip(tmp_path, net19):
    trace = simulate(net19, generate_vectors(net19, 77, seed=8))
    path = tmp_path / "t.bin"
    write_trace(path, trace)
    assert path.read_bytes()[:8] == b"NMTRACE1"
    assert np.array_equal(read_trace(path), trace.to_array())


def test_trace_dump_rejects_other_files(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"garbage!" + bytes(8))
    with pytest.raises(ValueError):
        read_trace(p)


def test_numpy_flag_selects_fallback():
    env = dict(os.environ, NETMARK_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "from netmark import _kernels; print(_kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


needs_numba = pytest.mark.skipif(not hasattr(_kernels, "eval_gates_numba"),
                                 reason="numba not importable")


@needs_numba
@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32), n_bits=st.integers(1, 300))
def test_kernels_agree_on_toggles_and_popcounts(seed, n_bits):
    rng = np.random.default_rng(seed)
    n_words = -(-n_bits // 64)
    words = rng.integers(0, 2**64, size=(9, n_words), dtype=np.uint64)
    rem = n_bits % 64
    if rem:
        words[:, -1] &= np.uint64((1 << rem) - 1)
    first = rng.random(9) < 0.5
    assert np.array_equal(_kernels.toggle_counts_numpy(words, first, n_bits),
                          _kernels.toggle_counts_numba(words, first, n_bits))
    assert np.array_equal(_kernels.popcount_rows_numpy(words), _kernels.popcount_rows_numba(words))
    assert np.array_equal(_kernels.hamming_to_row_numpy(words, words[0]),
                          _kernels.hamming_to_row_numba(words, words[0]))


@needs_numba
@pytest.mark.parametrize("name", ["c17", "c880", "s27", "c5315"])
def test_kernels_agree_on_gate_evaluation(name):
    from netmark.sim import _program

    n = load(name)
    p = _program(n)
    words = generate_vectors(n, 64 * 40, seed=1)
    base = np.zeros((n.net_count, 40), dtype=np.uint64)
    base[list(n.effective_inputs)] = pack_lanes(words.bits)
    a, b = base.copy(), base.copy()
    _kernels.eval_gates_numpy(p.ops, p.outs, p.ptr, p.idx, a)
    _kernels.eval_gates_numba(p.ops, p.outs, p.ptr, p.idx, b)
    assert np.array_equal(a, b)
