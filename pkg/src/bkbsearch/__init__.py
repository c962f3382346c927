"""Best-first search for the most probable inference in cyclic knowledge graphs."""

from .heuristic import CostTable, compute_cost_sharing, evaluate_acyclic, verify_cost_solution
from .model import Inference, KnowledgeGraph, Support, check_inference, parse_bkb, serialize_bkb, validate
from .oracle import audit_admissibility, enumerate_inferences, min_weight_inference
from .search import SearchResult, find_best_inferences

__all__ = [
    "CostTable",
    "Inference",
    "KnowledgeGraph",
    "SearchResult",
    "Support",
    "audit_admissibility",
    "check_inference",
    "compute_cost_sharing",
    "enumerate_inferences",
    "evaluate_acyclic",
    "find_best_inferences",
    "min_weight_inference",
    "parse_bkb",
    "serialize_bkb",
    "validate",
    "verify_cost_solution",
]
