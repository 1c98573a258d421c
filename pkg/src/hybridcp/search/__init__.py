from .engine import SearchResult, SearchStats, luby, sample_order, search_bab, search_ilds, search_rbs
from .heuristics import (
    Cache,
    DqnHeuristic,
    Heuristic,
    Lexicographic,
    Nearest,
    Oracle,
    PpoHeuristic,
    dqn_heuristic,
    lexicographic,
    nearest,
    oracle,
    ppo_heuristic,
)
from .model import CpModel, SolverState, encode, fixpoint_from_scratch, worst_case_nodes
