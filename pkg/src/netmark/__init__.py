"""Challenge-response watermarking and tamper detection for gate-level netlists."""
from .netlist import (BenchSyntaxError, CycleError, Gate, GateFunction, Netlist, NetlistError,
                      fanin_cone_size, levelize, parse_bench, read_bench, serialize_bench)
from .sim import activity, generate_vectors, simulate, toggled_nets
from .select import cluster_nets, score_nets, select_sensitive, trace_distance
from .watermark import (CrpDatabase, DetectionReport, ModificationSize, Verdict, WatermarkConfig,
                        authenticate, build_crp_db, estimate_modification, insert_digest,
                        mine_challenges, sign)
from .tamper import (Equivalence, MutationKind, MutationSpec, is_functionally_changed, mutate)

__version__ = "0.1.0"
