from pathlib import Path

import pytest

from netmark.netlist import parse_bench, read_bench

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"
CORPUS_FILES = sorted(CORPUS.glob("*.bench"))

# small 19-net, 5-input circuit used for hand-evaluated checks
NET19_BENCH = """\
INPUT(N1)
INPUT(N2)
INPUT(N3)
INPUT(N4)
INPUT(N5)
OUTPUT(N19)
OUTPUT(N14)
N6 = NAND(N1, N3)
N7 = NAND(N3, N4)
N8 = NOR(N2, N5)
N9 = NAND(N2, N7)
N10 = NAND(N7, N5)
N11 = AND(N6, N9)
N12 = OR(N9, N10)
N13 = XOR(N8, N11)
N14 = NOT(N12)
N15 = AND(N13, N4)
N16 = NOR(N11, N14)
N17 = XNOR(N15, N16)
N18 = OR(N16, N8)
N19 = NAND(N17, N18)
"""

AND_BENCH = "INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = AND(a, b)\n"

FULL_ADDER_BENCH = """\
INPUT(a)
INPUT(b)
INPUT(cin)
OUTPUT(s)
OUTPUT(cout)
p = XOR(a, b)
s = XOR(p, cin)
g = AND(a, b)
t = AND(p, cin)
cout = OR(g, t)
"""


@pytest.fixture(scope="session")
def net19():
    return parse_bench(NET19_BENCH, name="net19")


@pytest.fixture(scope="session")
def and_gate():
    return parse_bench(AND_BENCH, name="and1")


@pytest.fixture(scope="session")
def full_adder():
    return parse_bench(FULL_ADDER_BENCH, name="fa")


_loaded = {}


def load(name):
    if name not in _loaded:
        _loaded[name] = read_bench(CORPUS / f"{name}.bench")
    return _loaded[name]


def small_circuits():
    """Every corpus or hand-built circuit with at most 12 effective inputs."""
    out = [parse_bench(NET19_BENCH, "net19"), parse_bench(AND_BENCH, "and1"),
           parse_bench(FULL_ADDER_BENCH, "fa")]
    for p in CORPUS_FILES:
        n = read_bench(p)
        if n.input_width <= 12:
            out.append(n)
    return out


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
