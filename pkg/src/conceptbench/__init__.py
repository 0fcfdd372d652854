"""Ontology-aware concept indices, unseen-concept metrics and auto-labeling tools."""

from .corpus import AnnotatedPassage, PredictionRecord, read_corpus, read_predictions
from .embeddings import EmbeddingStore, MatchResult, knn, load_embeddings, match_names
from .graph import ConceptGraph, GraphConfig, IndexKind, build_graph
from .indexing import build_index, check_tree
from .metrics import (
    EvalReport,
    count_prefix,
    evaluate,
    exact_match,
    lcp,
    paired_t_test_one_sided,
    spearman,
    u_cs,
    u_rc,
)
from .ontology import Concept, NameRecord, Ontology, filter_descendants, load_ontology, name_table
from .partition import PartitionConfig, partition
from .retrieval import Bm25Index, build_bm25, pool_candidates, pool_recall, retrieve
from .splits import Split, SplitSpec, enforce_unseen, make_split, sample_schedule, select_core
from .tree import LabelTree, TreeNode, assign_indices, load_tree, save_tree

__version__ = "0.1.0"
