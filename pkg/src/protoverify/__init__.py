"""Static verifier for semantic conflicts in query/answer protocols
between services that use different ontologies."""

from .consistency import Mismatch, check_consistency, explain_mismatch
from .ontology import OntologyGraph, load_ontology, parse_ontology
from .oracle import enumerate_reaching_traces, is_reachable
from .protocol import ProtocolAst, parse_protocol, print_protocol
from .relstore import Database, Relation, class_extent, load_database, natural_join, project, select
from .spuriousness import (
    SpuriousnessReport,
    step_verify,
    verify_all,
)

__all__ = [
    "Mismatch",
    "check_consistency",
    "explain_mismatch",
    "OntologyGraph",
    "load_ontology",
    "parse_ontology",
    "enumerate_reaching_traces",
    "is_reachable",
    "ProtocolAst",
    "parse_protocol",
    "print_protocol",
    "Database",
    "Relation",
    "class_extent",
    "load_database",
    "natural_join",
    "project",
    "select",
    "SpuriousnessReport",
    "step_verify",
    "verify_all",
]
