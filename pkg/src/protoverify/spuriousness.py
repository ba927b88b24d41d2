"""Database-level verification of ontological conflicts.

Given the conflicts found by the consistency checker, decide per
conflicting query whether the current back-end database can actually
drive an execution into it (realizable, with a witness tuple) or whether
every correct instantiation avoids it (spurious).

The machinery works over assignable sets: for each variable group the
relation of value tuples the evaluator could produce, computed with the
relational algebra and memoized per variable-set key. The verdict itself
comes from the execution-state relation of the path to the conflict,
where a query without a matching answer continues with null bindings and
each branch on the path must evaluate to the arm the path takes.

Step mode seeds concrete answers from a conversation prefix and prunes
conflicts behind branch decisions that were already taken.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import values
from .errors import (
    DependencyCycleError,
    InconsistentTraceError,
    NoExtentError,
    UncoveredBindingError,
    UnresolvableClassError,
)
from .ontology import OntologyGraph
from .protocol import (
    INSTANTIATED,
    Action,
    Branch,
    Condition,
    Lit,
    ProtocolAst,
    Query,
    Var,
    branch_path,
    classify_variables,
    eval_condition,
    instantiating_query,
    path_conditions,
)
from .relstore import Database, Relation, class_extent, natural_join, project, rename, select

CONJUNCTION = "conjunction"
DISJUNCTION = "disjunction"

SPURIOUS = "spurious"
REALIZABLE = "realizable"

# Sentinel answer for a query the trace recorded as unanswered.
NO_ANSWER = object()


# --- dependency info ---

@dataclass(frozen=True)
class DependencyInfo:
    """Constrain edges: (already-instantiated var, newly instantiated var)
    pairs contributed by each query."""

    edges: frozenset[tuple[str, str]]

    def sources_of(self, var: str) -> frozenset[str]:
        return frozenset(s for s, t in self.edges if t == var)


def query_prior_variables(p: ProtocolAst, q: Query) -> frozenset[str]:
    """Variables of a query that were instantiated by earlier queries:
    re-used binding variables plus where-clause variables bound elsewhere."""
    classes = classify_variables(p)
    prior = set()
    for var in q.output_variables():
        if classes[(q.id, var)] == INSTANTIATED:
            prior.add(var)
    fresh = {v for v in q.output_variables() if (q.id, v) not in classes
             or classes[(q.id, v)] != INSTANTIATED}
    for cond in q.where:
        for var in cond.variables():
            if var not in fresh and classes.get((q.id, var)) == INSTANTIATED:
                prior.add(var)
    return frozenset(prior)


def query_new_variables(p: ProtocolAst, q: Query) -> frozenset[str]:
    classes = classify_variables(p)
    return frozenset(
        v for v in q.output_variables() if classes[(q.id, v)] != INSTANTIATED
    )


def constrain_relation(p: ProtocolAst) -> DependencyInfo:
    """Per-query edges from previously instantiated to newly instantiated
    variables."""
    edges = set()
    for q in p.queries():
        prior = query_prior_variables(p, q)
        new = query_new_variables(p, q)
        for s in prior:
            for t in new:
                edges.add((s, t))
    return DependencyInfo(frozenset(edges))


def restrict_set(dep: DependencyInfo, v) -> frozenset[str]:
    """Transitive dependency closure of a variable set under the constrain
    relation (backward), excluding the set itself."""
    v = frozenset(v)
    closure: set[str] = set()
    frontier = list(v)
    while frontier:
        var = frontier.pop()
        for src in dep.sources_of(var):
            if src not in closure:
                closure.add(src)
                frontier.append(src)
    return frozenset(closure - v)


def split_set(dep: DependencyInfo, p: ProtocolAst, v, conflict_query: int) -> frozenset[str]:
    """Variables of v and its dependency closure that occur in a branch
    condition on the path to the conflicting query."""
    v = frozenset(v)
    scope = v | restrict_set(dep, v)
    cond_vars: set[str] = set()
    for cond in path_conditions(p, conflict_query):
        cond_vars |= cond.variables()
    return frozenset(scope & cond_vars)


def make_sets(p: ProtocolAst, v) -> list[frozenset[str]]:
    """Partition a variable set by instantiating query, ordered by query
    position."""
    groups: dict[int, set[str]] = {}
    for var in v:
        groups.setdefault(instantiating_query(p, var), set()).add(var)
    return [frozenset(groups[qid]) for qid in sorted(groups)]


def relevant_conditions(p: ProtocolAst, v_split, conflict_query: int) -> list[Condition]:
    """Path conditions (already negation-normalized) mentioning at least
    one split-set variable."""
    v_split = frozenset(v_split)
    return [
        cond
        for cond in path_conditions(p, conflict_query)
        if cond.variables() & v_split
    ]


# --- assignable sets ---

def generate_assignable_set(q: Query, prior_tables, db: Database) -> Relation:
    """The relation of tuples the evaluator could answer for a query,
    given the assignable relations of its previously instantiated
    variables.

    Each class reference contributes its extent with bound attribute
    columns renamed to the query's variables; everything is joined,
    filtered by the evaluable where conditions, and projected onto the
    query's variables plus the prior tables' columns.
    """
    prior_tables = list(prior_tables)
    out_vars = list(q.output_variables())
    non_wildcard = [(attr, var) for attr, var in q.bindings if var is not None]

    parts: list[Relation] = []
    covered: set[str] = set()
    for ref in q.class_refs:
        terminal = ref.names[-1]
        node = db.ontology.find_match(terminal)
        if node is None:
            raise UnresolvableClassError(
                f"query {q.id}: class {terminal!r} does not resolve"
            )
        try:
            ext = class_extent(db, node.name)
        except NoExtentError as exc:
            raise UnresolvableClassError(str(exc)) from exc
        local = [(attr, var) for attr, var in non_wildcard if attr in ext.columns]
        if not local:
            # No bound attribute touches this extent; it contributes no
            # variable columns and cannot constrain anything.
            continue
        covered.update(var for _, var in local)
        part = project(ext, [attr for attr, _ in local])
        # Two attributes bound to one variable inside a single class act
        # as an equality constraint; nulls never satisfy it.
        by_var: dict[str, list[str]] = {}
        for attr, var in local:
            by_var.setdefault(var, []).append(attr)
        keep_attr: dict[str, str] = {}
        filtered_rows = part.rows
        for var, attrs in by_var.items():
            keep_attr[var] = attrs[0]
            if len(attrs) > 1:
                idxs = [part.index(a) for a in attrs]
                filtered_rows = frozenset(
                    row
                    for row in filtered_rows
                    if all(
                        row[idxs[0]] is not None and row[i] == row[idxs[0]]
                        for i in idxs[1:]
                    )
                )
        part = Relation(part.columns, part.tags, filtered_rows, part.name)
        part = project(part, [keep_attr[var] for var in keep_attr])
        part = rename(part, {attr: var for var, attr in keep_attr.items()})
        parts.append(part)

    missing = [var for _, var in non_wildcard if var not in covered]
    if missing:
        raise UncoveredBindingError(
            f"query {q.id}: no class answers variables {sorted(set(missing))}"
        )

    # A query with only wildcard bindings contributes the unit relation.
    t = parts[0] if parts else Relation((), (), frozenset([()]))
    for part in parts[1:]:
        t = natural_join(t, part)
    for prior in prior_tables:
        t = natural_join(t, prior)

    applicable = [c for c in q.where if c.variables() <= set(t.columns)]
    t = select(t, applicable, CONJUNCTION)

    keep = list(out_vars)
    for prior in prior_tables:
        for c in prior.columns:
            if c not in keep:
                keep.append(c)
    return project(t, [c for c in keep if c in t.columns])


def split_assignable_set(delta: Relation, v_split, conds, mode: str = CONJUNCTION) -> Relation:
    """Filter an assignable relation by the relevant path conditions."""
    return select(delta, conds, mode)


# --- verification context and driver ---

@dataclass
class VerifyContext:
    """State confined to one verification run.

    The cache maps a canonical variable-set key to its assignable
    relation; None marks a group whose relation could not be non-empty
    (unanswerable query or emptied dependency), i.e. the group's
    variables are always null in execution.
    """

    mode: str = "static"
    cache: dict[frozenset, Relation | None] = field(default_factory=dict)
    in_flight: set[frozenset] = field(default_factory=set)
    seeded_answers: dict[int, object] = field(default_factory=dict)


@dataclass(frozen=True)
class ConflictVerdict:
    query_id: int
    verdict: str
    witness: dict | None = None
    emptied_at: tuple[str, ...] | None = None
    note: str | None = None

    def to_json(self) -> dict:
        out: dict = {"queryId": self.query_id, "verdict": self.verdict}
        if self.verdict == REALIZABLE:
            out["witness"] = {
                k: values.value_to_json(v) for k, v in sorted(self.witness.items())
            }
        else:
            out["emptiedAt"] = list(self.emptied_at or ())
        if self.note:
            out["note"] = self.note
        return out


@dataclass(frozen=True)
class SpuriousnessReport:
    entries: tuple[ConflictVerdict, ...]
    mode: str = "static"

    def to_json(self) -> list[dict]:
        return [dict(e.to_json(), mode=self.mode) for e in self.entries]

    def to_json_text(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=False)

    def verdict_for(self, query_id: int) -> str | None:
        for e in self.entries:
            if e.query_id == query_id:
                return e.verdict
        return None

    def has_realizable(self) -> bool:
        return any(e.verdict == REALIZABLE for e in self.entries)


def verify_conflict(v, conflict_query: int, ctx: VerifyContext,
                    p: ProtocolAst, db: Database, dep: DependencyInfo) -> bool:
    """True iff a non-empty assignable relation exists for the variable
    set; the relation (or None for an unanswerable group) is memoized
    under the set's key.

    Dependencies are verified recursively in instantiation order; a group
    re-entered while still being computed signals a malformed protocol.
    """
    key = frozenset(v)
    if not key:
        return True
    if key in ctx.cache:
        rel = ctx.cache[key]
        return rel is not None and bool(rel.rows)
    if key in ctx.in_flight:
        raise DependencyCycleError(
            f"cyclic dependency through variables {sorted(key)}"
        )
    ctx.in_flight.add(key)
    try:
        groups = make_sets(p, key)
        if len(groups) > 1:
            rel: Relation | None = None
            ok = True
            for g in groups:
                if not verify_conflict(g, conflict_query, ctx, p, db, dep):
                    ok = False
            if ok:
                rel = ctx.cache[frozenset(groups[0])]
                for g in groups[1:]:
                    rel = natural_join(rel, ctx.cache[frozenset(g)])
        else:
            rel = _group_relation(groups[0], conflict_query, ctx, p, db, dep)
        ctx.cache[key] = rel
        return rel is not None and bool(rel.rows)
    finally:
        ctx.in_flight.discard(key)


def _group_relation(group, conflict_query, ctx, p, db, dep):
    qid = instantiating_query(p, next(iter(group)))
    q = p.query(qid)
    if qid in ctx.seeded_answers:
        answer = ctx.seeded_answers[qid]
        if answer is NO_ANSWER:
            return None
        cols = tuple(q.output_variables())
        row = tuple(answer[c] for c in cols)
        declared = _variable_tags(q, db)
        tags = tuple(
            declared.get(c, values.tag_of(cell) if cell is not None else "str")
            for c, cell in zip(cols, row)
        )
        return Relation(cols, tags, frozenset([row]), f"trace:{qid}")
    prior = query_prior_variables(p, q)
    prior_rels = []
    for g in make_sets(p, prior):
        if not verify_conflict(g, conflict_query, ctx, p, db, dep):
            # The prior variables can only be null; joining on a null
            # never matches, so this query can never be answered.
            return None
        prior_rels.append(ctx.cache[frozenset(g)])
    try:
        return generate_assignable_set(q, prior_rels, db)
    except (UnresolvableClassError, UncoveredBindingError):
        # The query itself cannot be answered by the server; in execution
        # its variables come back null.
        return None


def _path_queries(stmts, target: int):
    """Queries on the unique syntactic path from the start to the target
    query, in execution order, excluding the target itself."""
    out: list[Query] = []
    for s in stmts:
        if isinstance(s, Query):
            if s.id == target:
                return out, True
            out.append(s)
        elif isinstance(s, Branch):
            sub, found = _path_queries(s.then_block, target)
            if found:
                return out + sub, True
            sub, found = _path_queries(s.else_block or (), target)
            if found:
                return out + sub, True
            # Queries inside a branch the path does not enter never run
            # before the target.
    return out, False


def _branch_pairs(p: ProtocolAst, target: int,
                  drop: set[int] | None = None):
    """(conditions, arm) per branch on the path to the target: the
    branch's conjunction must evaluate to exactly the arm taken."""
    by_id = {b.id: b for b in p.branches()}
    pairs = []
    for bid, arm in branch_path(p, target):
        if drop and bid in drop:
            continue
        pairs.append((by_id[bid].conditions, arm))
    return pairs


def _execution_relation(p: ProtocolAst, db: Database, target: int,
                        seeded: dict[int, object]) -> Relation:
    """All variable states an execution can be in when it arrives at the
    target query, one row per reachable state.

    Each path query extends every prior state with its possible answers;
    a state with no matching answer continues with the fresh variables
    null, mirroring the evaluator's no-answer semantics. The relation is
    therefore never empty.
    """
    queries, _found = _path_queries(p.statements, target)
    cols: list[str] = []
    tags: list[str] = []
    rows: set[tuple] = {()}
    for q in queries:
        out_vars = list(q.output_variables())
        declared = _variable_tags(q, db)
        deferred: list[Condition] = []
        if q.id in seeded:
            answer = seeded[q.id]
            a_cols = tuple(out_vars)
            a_tags = tuple(declared.get(v, "str") for v in out_vars)
            if answer is NO_ANSWER:
                a_rows: frozenset = frozenset()
            else:
                a_rows = frozenset([tuple(answer.get(v) for v in out_vars)])
        else:
            try:
                rel = generate_assignable_set(q, [], db)
            except (UnresolvableClassError, UncoveredBindingError):
                rel = None
            if rel is None:
                a_cols = tuple(out_vars)
                a_tags = tuple(declared.get(v, "str") for v in out_vars)
                a_rows = frozenset()
            else:
                a_cols, a_tags, a_rows = rel.columns, rel.tags, rel.rows
            # Conditions over previously instantiated variables are not
            # evaluable inside the query alone; apply them per state.
            deferred = [
                c for c in q.where if not (c.variables() <= set(a_cols))
            ]
        shared = [v for v in a_cols if v in cols]
        new_vars = [v for v in a_cols if v not in cols]
        a_index = {v: i for i, v in enumerate(a_cols)}
        next_rows: set[tuple] = set()
        for row in rows:
            env = dict(zip(cols, row))
            extensions: set[tuple] = set()
            for arow in a_rows:
                ok = True
                for v in shared:
                    cell = arow[a_index[v]]
                    if env[v] is None or cell is None or env[v] != cell:
                        ok = False
                        break
                if ok and deferred:
                    full = dict(env)
                    full.update(zip(a_cols, arow))
                    ok = all(eval_condition(c, full) for c in deferred)
                if ok:
                    extensions.add(tuple(arow[a_index[v]] for v in new_vars))
            if extensions:
                next_rows.update(row + ext for ext in extensions)
            else:
                next_rows.add(row + (None,) * len(new_vars))
        cols.extend(new_vars)
        tags.extend(a_tags[a_index[v]] for v in new_vars)
        rows = next_rows
    return Relation(tuple(cols), tuple(tags), frozenset(rows), f"reach:{target}")


def _decide_conflict(qid: int, ctx: VerifyContext, p: ProtocolAst, db: Database,
                     dep: DependencyInfo, combination: str,
                     drop_conditions_of: set[int] | None = None) -> ConflictVerdict:
    pairs = _branch_pairs(p, qid, drop_conditions_of)
    if not pairs:
        return ConflictVerdict(qid, REALIZABLE, witness={})

    needed: set[str] = set()
    for conds, _arm in pairs:
        for cond in conds:
            needed |= cond.variables()

    # Keep the memoized assignable-set machinery warm for the groups the
    # decision depends on; its relations back witness explanations and
    # the coherence checks.
    for g in make_sets(p, needed):
        verify_conflict(g, qid, ctx, p, db, dep)

    states = _execution_relation(p, db, qid, ctx.seeded_answers)
    if not needed <= set(states.columns):
        return ConflictVerdict(
            qid, REALIZABLE, witness={},
            note="path condition over variables bound only inside "
                 "branches; reachability reported conservatively",
        )

    reaching = []
    for row in states.rows:
        env = dict(zip(states.columns, row))
        checks = [
            all(eval_condition(c, env) for c in conds) == arm
            for conds, arm in pairs
        ]
        if all(checks) if combination == CONJUNCTION else any(checks):
            reaching.append(row)
    if not reaching:
        return ConflictVerdict(qid, SPURIOUS, emptied_at=tuple(sorted(needed)))
    witness_row = min(
        reaching, key=lambda r: tuple(values.sort_key(v) for v in r)
    )
    witness = dict(zip(states.columns, witness_row))
    return ConflictVerdict(qid, REALIZABLE, witness=witness)


def verify_all(p: ProtocolAst, server: OntologyGraph, db: Database, conflicts,
               combination: str = CONJUNCTION) -> SpuriousnessReport:
    """One verdict per distinct conflicting query, in query order."""
    dep = constrain_relation(p)
    ctx = VerifyContext(mode="static")
    entries = []
    for qid in sorted({m.query_id for m in conflicts}):
        entries.append(_decide_conflict(qid, ctx, p, db, dep, combination))
    return SpuriousnessReport(tuple(entries), mode="static")


# --- step mode (incremental verification after each exchange) ---

def step_verify(p: ProtocolAst, server: OntologyGraph, db: Database, conflicts,
                trace, combination: str = CONJUNCTION) -> SpuriousnessReport:
    """Re-verify the remaining conflicts after a conversation prefix.

    Conflicts behind branch decisions the prefix already took the other
    way are dropped; answered queries become singleton assignable
    relations. An empty trace degenerates to the static verdicts.
    """
    seeded, decided, reached = _replay_trace(p, db, trace)
    dep = constrain_relation(p)
    ctx = VerifyContext(
        mode="step" if trace else "static", seeded_answers=seeded
    )
    entries = []
    for qid in sorted({m.query_id for m in conflicts}):
        pruned = False
        for bid, arm in branch_path(p, qid):
            if bid in decided and decided[bid] != arm:
                pruned = True
                break
        if pruned:
            continue
        if qid in reached:
            entries.append(
                ConflictVerdict(
                    qid, REALIZABLE, witness={},
                    note="conflicting query already reached in trace",
                )
            )
            continue
        entries.append(
            _decide_conflict(
                qid, ctx, p, db, dep, combination,
                drop_conditions_of=set(decided),
            )
        )
    return SpuriousnessReport(tuple(entries), mode=ctx.mode)


def parse_trace(raw, p: ProtocolAst, db: Database):
    """Decode a JSON trace (list of {queryId, answer, branch?} entries)
    into the internal (queryId, answer-dict | NO_ANSWER, decisions) form."""
    entries = []
    for item in raw:
        if "queryId" not in item:
            raise InconsistentTraceError("trace entry missing queryId")
        qid = item["queryId"]
        q = p.query(qid)
        raw_answer = item.get("answer")
        if raw_answer is None:
            answer = NO_ANSWER
        else:
            answer = {}
            tags = _variable_tags(q, db)
            for var, raw_val in raw_answer.items():
                answer[var] = values.value_from_json(raw_val, tags.get(var, "str"))
        decisions = item.get("branch")
        if decisions is None:
            decisions = []
        elif isinstance(decisions, dict):
            decisions = [decisions]
        entries.append((qid, answer, [(d["index"], bool(d["taken"])) for d in decisions]))
    return entries


def _variable_tags(q: Query, db: Database) -> dict[str, str]:
    tags = {}
    for attr, var in q.bindings:
        if var is not None and attr in db.property_tags:
            tags[var] = db.property_tags[attr]
    return tags


def _replay_trace(p: ProtocolAst, db: Database, trace):
    """Validate a trace against the protocol and database schema.

    Returns (seeded answers per query id, branch decisions, reached query
    ids). Raises InconsistentTraceError on any violation.
    """
    entries = list(trace)
    claimed: dict[int, bool] = {}
    for _, _, decisions in entries:
        for bid, taken in decisions:
            claimed[bid] = taken
    env: dict[str, object] = {}
    seeded: dict[int, object] = {}
    decided: dict[int, bool] = {}
    reached: set[int] = set()
    pos = 0

    class _Exhausted(Exception):
        pass

    def walk(stmts):
        nonlocal pos
        for st in stmts:
            if isinstance(st, Query):
                if pos >= len(entries):
                    raise _Exhausted()
                qid, answer, _ = entries[pos]
                if qid != st.id:
                    raise InconsistentTraceError(
                        f"trace answers query {qid} but query {st.id} executes next"
                    )
                pos += 1
                reached.add(st.id)
                _apply_answer(p, st, answer, env, db)
                seeded[st.id] = answer
            elif isinstance(st, Branch):
                if all(v in env for c in st.conditions for v in c.variables()):
                    outcome = all(eval_condition(c, env) for c in st.conditions)
                    if st.id in claimed and claimed[st.id] != outcome:
                        raise InconsistentTraceError(
                            f"trace decides branch {st.id} as {claimed[st.id]} "
                            f"but the seeded values force {outcome}"
                        )
                    decided[st.id] = outcome
                    if outcome:
                        walk(st.then_block)
                    elif st.else_block is not None:
                        walk(st.else_block)
                else:
                    if pos < len(entries):
                        raise InconsistentTraceError(
                            f"branch {st.id} guard is undecidable but the "
                            f"trace continues past it"
                        )
                    raise _Exhausted()
            elif isinstance(st, Action):
                continue
        return

    try:
        walk(p.statements)
    except _Exhausted:
        pass
    if pos < len(entries):
        raise InconsistentTraceError(
            f"trace entry for query {entries[pos][0]} never executes"
        )
    return seeded, decided, reached


def _apply_answer(p: ProtocolAst, q: Query, answer, env, db: Database):
    if answer is NO_ANSWER:
        for var in query_new_variables(p, q):
            env[var] = None
        return
    expected = set(q.output_variables())
    if set(answer) != expected:
        raise InconsistentTraceError(
            f"answer for query {q.id} must bind exactly {sorted(expected)}"
        )
    tags = _variable_tags(q, db)
    for var, val in answer.items():
        if val is not None and var in tags:
            if not values.tags_comparable(values.tag_of(val), tags[var]):
                raise InconsistentTraceError(
                    f"answer value for {var!r} has tag "
                    f"{values.tag_of(val)!r}, expected {tags[var]!r}"
                )
    for var in expected & set(env):
        prev = env[var]
        if prev is None or answer[var] is None or prev != answer[var]:
            raise InconsistentTraceError(
                f"answer rebinds instantiated variable {var!r} inconsistently"
            )
    check_env = dict(env)
    check_env.update(answer)
    for cond in q.where:
        if cond.variables() <= set(check_env) and not eval_condition(cond, check_env):
            raise InconsistentTraceError(
                f"answer for query {q.id} violates its where clause {cond}"
            )
    env.update(answer)
