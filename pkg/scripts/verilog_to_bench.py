"""Convert primitive-gate Verilog netlists to ISCAS ``.bench`` text.

Only the subset emitted by the synthesized ISCAS/ITC netlists shipped with
``circuitgraph`` is understood: ``input``/``output`` declarations, primitive
gate instances (``and``, ``nand``, ``or``, ``nor``, ``xor``, ``xnor``, ``not``,
``buf``), ``ff`` instances with named ``.D``/``.Q`` pins and net-to-net
``assign`` aliases (emitted as ``BUFF``).

Usage::

    python scripts/verilog_to_bench.py c5315.v > benchmarks/c5315.bench
"""
import re
import sys

PRIMS = {"and": "AND", "nand": "NAND", "or": "OR", "nor": "NOR", "xor": "XOR",
         "xnor": "XNOR", "not": "NOT", "buf": "BUFF"}


def convert(text, name):
    text = re.sub(r"//.*", "", text)
    stmts = [s.strip() for s in text.replace("\n", " ").split(";")]
    inputs, outputs, lines = [], [], []
    for s in stmts:
        if not s or s.startswith(("module", "wire", "endmodule")):
            continue
        head, _, rest = s.partition(" ")
        if head in ("input", "output"):
            names = [n.strip() for n in rest.split(",") if n.strip()]
            (inputs if head == "input" else outputs).extend(names)
        elif head == "assign":
            lhs, rhs = (p.strip() for p in rest.split("="))
            if "'" in rhs:
                raise ValueError(f"constant assignment not representable: {s}")
            lines.append(f"{lhs} = BUFF({rhs})")
        elif head in PRIMS:
            ports = re.search(r"\((.*)\)", rest).group(1)
            nets = [p.strip() for p in ports.split(",")]
            lines.append(f"{nets[0]} = {PRIMS[head]}({', '.join(nets[1:])})")
        elif head == "ff":
            pins = dict(re.findall(r"\.(\w+)\s*\(\s*([\w\[\]]+)\s*\)", rest))
            lines.append(f"{pins['Q']} = DFF({pins['D']})")
        else:
            raise ValueError(f"unsupported statement: {s[:60]}")
    # clock nets only feed flip-flops, which become scan cells
    used = " ".join(lines)
    inputs = [i for i in inputs if re.search(rf"\b{re.escape(i)}\b", used) or i in outputs]
    out = [f"# {name}", ""]
    out += [f"INPUT({i})" for i in inputs]
    out += [f"OUTPUT({o})" for o in outputs]
    out.append("")
    out += lines
    return "\n".join(out) + "\n"


if __name__ == "__main__":
    path = sys.argv[1]
    stem = re.sub(r".*/", "", path).rsplit(".", 1)[0]
    with open(path) as fh:
        sys.stdout.write(convert(fh.read(), stem))
