"""Ontology-level conflict detection over a protocol.

Walks every query in order, resolves its class references against the
server ontology (specialization sequences descend the hierarchy), and
checks that every queried attribute is answerable on the matched
classes. Produces a typed, ordered mismatch list; empty means the
protocol is ontology-level safe.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import MalformedMismatchError
from .ontology import OntologyGraph
from .protocol import ProtocolAst

CLASS_NOT_FOUND = "ClassNotFound"
SPECIALIZATION_MISMATCH = "SpecializationMismatch"
UNMATCHED_VARIABLES = "UnmatchedVariables"


@dataclass(frozen=True)
class Mismatch:
    kind: str
    query_id: int
    class_ref: tuple[str, ...] | None = None
    failed_index: int | None = None
    # (attribute, variable) pairs whose attribute no matched class answers
    variables: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.kind == UNMATCHED_VARIABLES and not self.variables:
            raise MalformedMismatchError(
                "UnmatchedVariables mismatch needs a non-empty variable set"
            )
        if self.kind == SPECIALIZATION_MISMATCH and self.failed_index is None:
            raise MalformedMismatchError(
                "SpecializationMismatch needs the failing sequence index"
            )

    def failed_name(self) -> str | None:
        if self.class_ref is None or self.failed_index is None:
            return None
        return self.class_ref[self.failed_index]

    def to_json(self) -> dict:
        details: dict = {}
        if self.kind == UNMATCHED_VARIABLES:
            details["variables"] = [
                {"attribute": attr, "variable": var} for attr, var in self.variables
            ]
        else:
            details["failedAt"] = self.failed_index
            details["failedClass"] = self.failed_name()
        return {
            "kind": self.kind,
            "queryId": self.query_id,
            "path": ".".join(self.class_ref) if self.class_ref else None,
            "details": details,
        }


def check_consistency(
    p: ProtocolAst, server: OntologyGraph, fail_fast: bool = False
) -> list[Mismatch]:
    """Detect every class-level and attribute-level mismatch, in
    (queryId, classRef position) order.

    With ``fail_fast`` the first mismatch aborts the scan.
    """
    out: list[Mismatch] = []
    for q in p.queries():
        answerable: set[str] = set()
        class_level_failure = False
        for ref in q.class_refs:
            head = server.find_match(ref.names[0])
            if head is None:
                out.append(
                    Mismatch(CLASS_NOT_FOUND, q.id, ref.names, failed_index=0)
                )
                class_level_failure = True
                if fail_fast:
                    return out
                continue
            current = head
            failed = False
            for i in range(1, len(ref.names)):
                nxt = server.find_match(ref.names[i])
                if nxt is None or not server.is_subclass(current.name, nxt.name):
                    out.append(
                        Mismatch(
                            SPECIALIZATION_MISMATCH, q.id, ref.names, failed_index=i
                        )
                    )
                    failed = True
                    class_level_failure = True
                    if fail_fast:
                        return out
                    break
                current = nxt
            if not failed:
                answerable |= server.effective_properties(current.name)
        if class_level_failure:
            # The answerable-attribute union is incomplete for this query;
            # an attribute check here would double-report the class failure.
            continue
        uncovered = tuple(
            (attr, var)
            for attr, var in q.bindings
            if var is not None and attr not in answerable
        )
        if uncovered:
            out.append(Mismatch(UNMATCHED_VARIABLES, q.id, variables=uncovered))
            if fail_fast:
                return out
    return out


@dataclass(frozen=True)
class MismatchReport:
    mismatch: Mismatch
    message: str


def explain_mismatch(m: Mismatch, server: OntologyGraph) -> MismatchReport:
    """Human-readable account of a mismatch against the server ontology."""
    if m.kind == CLASS_NOT_FOUND:
        name = m.failed_name()
        message = (
            f"query {m.query_id}: class {name!r} has no equivalent in the "
            f"server ontology"
        )
    elif m.kind == SPECIALIZATION_MISMATCH:
        name = m.failed_name()
        parent = m.class_ref[m.failed_index - 1]
        node = server.find_match(name)
        if node is None:
            actual = "it does not exist there at all"
        else:
            supers = sorted(server.ancestors(node.name))
            actual = (
                f"its superclasses there are {supers}" if supers
                else "it has no superclasses there"
            )
        message = (
            f"query {m.query_id}: {name!r} is not a subclass of {parent!r} in "
            f"the server ontology ({actual})"
        )
    elif m.kind == UNMATCHED_VARIABLES:
        parts = []
        for attr, var in m.variables:
            carriers = sorted(
                name
                for name in server.classes
                if attr in server.effective_properties(name)
            )
            where = f"carried only by {carriers}" if carriers else "carried by no class"
            parts.append(f"{attr} (variable {var}, {where})")
        message = (
            f"query {m.query_id}: attributes not answerable on the matched "
            f"classes: " + "; ".join(parts)
        )
    else:
        raise MalformedMismatchError(f"unknown mismatch kind {m.kind!r}")
    return MismatchReport(m, message)
