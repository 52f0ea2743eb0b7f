"""Randomized multi-valued Byzantine broadcast with hash-based consistency checks."""

from .adversary import CATALOGUE, make_adversary
from .broadcast import BroadcastInstance, ideal_broadcast_cost, om_broadcast
from .diagnosis import (
    DiagnosisGraph,
    SpanningTree,
    Transcript,
    analyze_dispute,
    build_spanning_tree,
    check_two_hop_lemma,
    update_isolation,
)
from .errors import (
    ConfigError,
    ContractViolation,
    HarnessError,
    InvariantViolation,
    PreconditionError,
    SourceFaulty,
)
from .field_hash import FieldElement, KeyedDigest, Payload, collision_bound, gf_mul, poly_hash
from .harness import ExperimentSpec, emit_report, run_experiment
from .protocol import ProtocolConfig, parameter_schedule, run_generation, run_session
from .simnet import Network, RoundMessage, RunMetrics, Tag, complexity_report, security_bound

__version__ = "0.1.0"
