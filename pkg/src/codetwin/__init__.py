"""Version-aware knowledge graph twin of a software repository."""

from .compiler import ContextPackage, Section, compile_package, estimate_tokens
from .curation import CurationDesk, UpdateProposal, laplace_confidence
from .extraction import EvidenceFragment, KnowledgeCard, Lexicon
from .model import (
    ArtifactNode,
    KnowledgeNode,
    TypedEdge,
    canonical_form,
    signature_table,
    validate_link_integrity,
    validate_schema,
)
from .query import QueryResult, QuerySpec, impact_of_change, run_query
from .store import RepoTimeline, TwinSnapshot, TwinStore, full_rebuild

__version__ = "1.0.0"

__all__ = [
    "ArtifactNode", "KnowledgeNode", "TypedEdge", "canonical_form",
    "signature_table", "validate_schema", "validate_link_integrity",
    "EvidenceFragment", "KnowledgeCard", "Lexicon",
    "TwinStore", "TwinSnapshot", "RepoTimeline", "full_rebuild",
    "QuerySpec", "QueryResult", "run_query", "impact_of_change",
    "ContextPackage", "Section", "compile_package", "estimate_tokens",
    "CurationDesk", "UpdateProposal", "laplace_confidence",
    "__version__",
]
