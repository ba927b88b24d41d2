"""Brute-force execution oracle for conflict-query reachability.

Exhaustively enumerates protocol executions against the database with
its own nested-loop conjunctive evaluation. Deliberately independent of
the dependency analysis, the relational algebra driver, and the
memoization cache; this is the ground truth the spuriousness engine is
tested against.

A query whose answer set is empty (or that the server cannot interpret
at all) binds its fresh variables to null and execution continues.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .errors import BoundExceededError
from .protocol import (
    Action,
    Branch,
    ProtocolAst,
    Query,
    eval_condition,
)
from .relstore import Database

DEFAULT_BOUND = 10**6


@dataclass(frozen=True)
class Trace:
    """One execution prefix reaching the target query."""

    entries: tuple[tuple[int, tuple | None], ...]  # (queryId, answer or None)
    branches: tuple[tuple[int, bool], ...]
    env: tuple[tuple[str, object], ...]  # bindings at the moment of arrival

    def env_dict(self) -> dict:
        return dict(self.env)


@dataclass(frozen=True)
class OracleResult:
    traces: tuple[Trace, ...]
    truncated: bool


def _extent_rows(db: Database, class_name: str):
    """Rows of a class and its non-abstract descendants, as attribute
    dicts over the class's effective properties; independent re-derivation
    of extent semantics."""
    graph = db.ontology
    node = graph.find_match(class_name)
    if node is None:
        return None
    attrs = sorted(graph.effective_properties(node.name))
    members = {node.name} | set(graph.descendants(node.name))
    rows = []
    seen = set()
    for member in sorted(members):
        table = db.tables.get(member)
        if table is None:
            continue
        for row in table.sorted_rows():
            d = dict(zip(table.columns, row))
            key = tuple(d[a] for a in attrs)
            if key not in seen:
                seen.add(key)
                rows.append({a: d[a] for a in attrs})
    return rows


def _answers(q: Query, env: dict, db: Database):
    """All answer tuples for a query under the current bindings, or []
    when the server cannot produce any (including unresolvable classes
    and unanswerable attributes)."""
    per_ref = []
    covered: set[str] = set()
    non_wildcard = [(attr, var) for attr, var in q.bindings if var is not None]
    for ref in q.class_refs:
        rows = _extent_rows(db, ref.names[-1])
        if rows is None:
            return []
        node = db.ontology.find_match(ref.names[-1])
        attrs = db.ontology.effective_properties(node.name)
        local = [(attr, var) for attr, var in non_wildcard if attr in attrs]
        covered.update(var for _, var in local)
        per_ref.append((local, rows))
    if any(var not in covered for _, var in non_wildcard):
        return []

    out_vars = q.output_variables()
    seen = set()
    answers = []
    for combo in itertools.product(*(rows for _, rows in per_ref)):
        assignment: dict[str, object] = {}
        ok = True
        for (local, _), row in zip(per_ref, combo):
            for attr, var in local:
                val = row[attr]
                if var in env and var not in assignment:
                    # previously instantiated: must propagate the value;
                    # null never matches anything
                    if env[var] is None or val is None or env[var] != val:
                        ok = False
                        break
                    assignment[var] = val
                elif var in assignment:
                    prev = assignment[var]
                    if prev is None or val is None or prev != val:
                        ok = False
                        break
                else:
                    assignment[var] = val
            if not ok:
                break
        if not ok:
            continue
        check_env = dict(env)
        check_env.update(assignment)
        if not all(eval_condition(c, check_env) for c in q.where):
            continue
        tup = tuple(assignment[v] for v in out_vars)
        if tup not in seen:
            seen.add(tup)
            answers.append(dict(zip(out_vars, tup)))
    return answers


def enumerate_reaching_traces(p: ProtocolAst, db: Database, target: int,
                              bound: int = DEFAULT_BOUND) -> OracleResult:
    """All executions (up to the step bound) that arrive at the target
    query. Arrival counts; the target itself is never evaluated."""
    if bound <= 0:
        raise ValueError("bound must be positive")
    traces: list[Trace] = []
    steps = 0
    truncated = False

    def fresh_vars(q: Query) -> list[str]:
        out = []
        for var in q.output_variables():
            if var not in current_env:
                out.append(var)
        return out

    current_env: dict[str, object] = {}

    def run(cont, entries, branches):
        nonlocal steps, truncated
        if truncated:
            return
        if not cont:
            return
        st, rest = cont[0], cont[1:]
        if isinstance(st, Query):
            if st.id == target:
                traces.append(
                    Trace(
                        tuple(entries),
                        tuple(branches),
                        tuple(sorted(current_env.items())),
                    )
                )
                return
            steps += 1
            if steps > bound:
                truncated = True
                return
            answers = _answers(st, current_env, db)
            if not answers:
                added = fresh_vars(st)
                for var in added:
                    current_env[var] = None
                run(rest, entries + [(st.id, None)], branches)
                for var in added:
                    del current_env[var]
                return
            out_vars = st.output_variables()
            for ans in answers:
                saved = {v: current_env.get(v, _MISSING) for v in out_vars}
                current_env.update(ans)
                run(
                    rest,
                    entries + [(st.id, tuple(ans[v] for v in out_vars))],
                    branches,
                )
                for v, old in saved.items():
                    if old is _MISSING:
                        del current_env[v]
                    else:
                        current_env[v] = old
                if truncated:
                    return
        elif isinstance(st, Branch):
            outcome = all(eval_condition(c, current_env) for c in st.conditions)
            arm = st.then_block if outcome else (st.else_block or ())
            run(list(arm) + rest, entries, branches + [(st.id, outcome)])
        elif isinstance(st, Action):
            run(rest, entries, branches)

    run(list(p.statements), [], [])
    return OracleResult(tuple(traces), truncated)


_MISSING = object()


def is_reachable(p: ProtocolAst, db: Database, target: int,
                 bound: int = DEFAULT_BOUND) -> bool:
    """True iff at least one execution reaches the target query."""
    result = enumerate_reaching_traces(p, db, target, bound)
    if result.truncated and not result.traces:
        raise BoundExceededError(
            f"enumeration bound {bound} exceeded before reaching query {target}"
        )
    return bool(result.traces)
