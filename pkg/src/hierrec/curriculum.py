"""Concepts, questions, their bipartite mapping, and interaction-log ingestion.

Dense integer ids are used everywhere internally; string ids from log or
curriculum files are mapped through a persisted, sorted-order dictionary so
one-hot dimensions are reproducible across runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .errors import EmptyCandidateSet, MalformedRow, OrphanQuestion, OutOfRangeId


class InteractionRecord(NamedTuple):
    question: int
    correct: int


# A learning history is an ordered list of records; empty is legal (cold start).
LearningHistory = list[InteractionRecord]

# A learning target is a non-empty sorted tuple of question ids.
LearningTarget = tuple[int, ...]


def make_target(questions: Iterable[int], n_questions: int) -> LearningTarget:
    qs = sorted(set(int(q) for q in questions))
    if not qs:
        raise EmptyCandidateSet("learning target must contain at least one question")
    if qs[0] < 0 or qs[-1] >= n_questions:
        raise OutOfRangeId(f"target question id outside [0, {n_questions})")
    return tuple(qs)


@dataclass(frozen=True)
class CurriculumMap:
    """Immutable bipartite concept<->question relation."""

    m: int
    n: int
    question_concepts: tuple[frozenset[int], ...]
    concept_questions: tuple[frozenset[int], ...]

    @property
    def edges(self) -> frozenset[tuple[int, int]]:
        return frozenset(
            (q, c) for q, cs in enumerate(self.question_concepts) for c in cs
        )

    def concepts_of(self, question: int) -> frozenset[int]:
        if not 0 <= question < self.n:
            raise OutOfRangeId(f"question id {question} outside [0, {self.n})")
        return self.question_concepts[question]

    def questions_of(self, concept: int) -> frozenset[int]:
        if not 0 <= concept < self.m:
            raise OutOfRangeId(f"concept id {concept} outside [0, {self.m})")
        return self.concept_questions[concept]

    def max_questions_per_concept(self) -> int:
        return max((len(qs) for qs in self.concept_questions), default=0)


def build_curriculum(m: int, n: int, edges: Iterable[tuple[int, int]]) -> CurriculumMap:
    """Build the bidirectional lookup from (question, concept) edges.

    Every question must carry at least one concept; ids must be in range.
    """
    edge_set = set((int(q), int(c)) for q, c in edges)
    if not edge_set:
        raise OrphanQuestion("edge list is empty")
    q_to_c = [set() for _ in range(n)]
    c_to_q = [set() for _ in range(m)]
    for q, c in edge_set:
        if not 0 <= q < n:
            raise OutOfRangeId(f"question id {q} outside [0, {n})")
        if not 0 <= c < m:
            raise OutOfRangeId(f"concept id {c} outside [0, {m})")
        q_to_c[q].add(c)
        c_to_q[c].add(q)
    orphans = [q for q, cs in enumerate(q_to_c) if not cs]
    if orphans:
        raise OrphanQuestion(f"questions with no concept: {orphans[:10]}")
    return CurriculumMap(
        m=m,
        n=n,
        question_concepts=tuple(frozenset(cs) for cs in q_to_c),
        concept_questions=tuple(frozenset(qs) for qs in c_to_q),
    )


def identity_curriculum(n_items: int) -> CurriculumMap:
    """One-to-one concept/question map (the KSS regime)."""
    return build_curriculum(n_items, n_items, [(i, i) for i in range(n_items)])


def questions_for_concepts(cmap: CurriculumMap, concepts: Iterable[int]) -> set[int]:
    """Union of the selected concepts' related questions (the candidate set)."""
    out: set[int] = set()
    for c in concepts:
        out |= cmap.questions_of(c)
    if not out:
        raise EmptyCandidateSet("selected concepts relate to no questions")
    return out


@dataclass
class CurriculumReport:
    per_concept_counts: dict[int, int]
    max_per_concept: int
    k: int
    candidate_bound: int  # sum of the k largest per-concept counts
    m_much_less_than_n: bool

    def lines(self) -> list[str]:
        return [
            f"concepts={len(self.per_concept_counts)} max_questions_per_concept={self.max_per_concept}",
            f"candidate bound at k={self.k}: |Q_t| <= {self.candidate_bound}",
            f"m < n: {self.m_much_less_than_n}",
        ]


def validate_curriculum(cmap: CurriculumMap, k: int = 1) -> CurriculumReport:
    counts = {c: len(cmap.concept_questions[c]) for c in range(cmap.m)}
    top = sorted(counts.values(), reverse=True)[: max(k, 0)]
    return CurriculumReport(
        per_concept_counts=counts,
        max_per_concept=max(counts.values(), default=0),
        k=k,
        candidate_bound=sum(top),
        m_much_less_than_n=cmap.m < cmap.n,
    )


class IdDictionary:
    """Persisted sorted-order mapping from string ids to dense integers."""

    def __init__(self, strings: Iterable[str]):
        ordered = sorted(set(strings))
        self._to_dense = {s: i for i, s in enumerate(ordered)}
        self._to_string = ordered

    def __len__(self) -> int:
        return len(self._to_string)

    def __contains__(self, s: str) -> bool:
        return s in self._to_dense

    def dense(self, s: str) -> int:
        return self._to_dense[s]

    def string(self, i: int) -> str:
        return self._to_string[i]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for s in self._to_string:
                fh.write(s + "\n")

    @classmethod
    def load(cls, path) -> "IdDictionary":
        with open(path, encoding="utf-8") as fh:
            return cls(line.rstrip("\n") for line in fh if line.strip())


class RawLogRow(NamedTuple):
    student_id: str
    question_id: str
    correct: int
    session_id: str
    timestamp: int


@dataclass
class ParseReport:
    n_rows: int = 0
    n_sessions: int = 0
    unknown_question_counts: dict[str, int] = field(default_factory=dict)

    @property
    def n_unknown(self) -> int:
        return sum(self.unknown_question_counts.values())


def parse_logs(
    rows: Iterable[RawLogRow], question_ids: IdDictionary
) -> tuple[dict[tuple[str, str], LearningHistory], ParseReport]:
    """One history per (student_id, session_id), sorted by (timestamp, input order).

    Unknown question ids are counted in the report, not silently dropped rows;
    malformed values raise MalformedRow at iteration time.
    """
    report = ParseReport()
    buckets: dict[tuple[str, str], list[tuple[int, int, InteractionRecord]]] = {}
    for order, row in enumerate(rows):
        report.n_rows += 1
        if row.correct not in (0, 1):
            raise MalformedRow(f"row {order}: correctness {row.correct!r} not in {{0,1}}")
        if row.question_id not in question_ids:
            counts = report.unknown_question_counts
            counts[row.question_id] = counts.get(row.question_id, 0) + 1
            continue
        q = question_ids.dense(row.question_id)
        key = (row.student_id, row.session_id)
        buckets.setdefault(key, []).append(
            (row.timestamp, order, InteractionRecord(q, row.correct))
        )
    histories = {
        key: [rec for _, _, rec in sorted(items, key=lambda it: (it[0], it[1]))]
        for key, items in buckets.items()
    }
    report.n_sessions = len(histories)
    return histories, report


LOG_HEADER = ["student_id", "question_id", "correct", "session_id", "timestamp"]
EDGE_HEADER = ["question_id", "concept_id"]


def _data_lines(path):
    with open(path, encoding="utf-8", newline="") as fh:
        for line in fh:
            if not line.lstrip().startswith("#"):
                yield line


def read_log_csv(path) -> Iterable[RawLogRow]:
    """Stream rows from a log CSV, validating types as they are read."""
    reader = csv.DictReader(_data_lines(path))
    if reader.fieldnames != LOG_HEADER:
        raise MalformedRow(f"expected header {LOG_HEADER}, found {reader.fieldnames}")
    for lineno, rec in enumerate(reader, start=2):
        try:
            correct = int(rec["correct"])
            timestamp = int(rec["timestamp"])
        except (TypeError, ValueError) as exc:
            raise MalformedRow(f"line {lineno}: {exc}") from exc
        if correct not in (0, 1):
            raise MalformedRow(f"line {lineno}: correctness {correct} not in {{0,1}}")
        yield RawLogRow(rec["student_id"], rec["question_id"], correct, rec["session_id"], timestamp)


def write_log_csv(path, rows: Iterable[RawLogRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_HEADER)
        for row in rows:
            writer.writerow([row.student_id, row.question_id, row.correct, row.session_id, row.timestamp])


def read_curriculum_csv(path) -> tuple[CurriculumMap, IdDictionary, IdDictionary]:
    """Load an edge file `question_id,concept_id` and build the dense map."""
    reader = csv.DictReader(_data_lines(path))
    if reader.fieldnames != EDGE_HEADER:
        raise MalformedRow(f"expected header {EDGE_HEADER}, found {reader.fieldnames}")
    pairs = [(rec["question_id"], rec["concept_id"]) for rec in reader]
    if not pairs:
        raise OrphanQuestion(f"no edges in {path}")
    qdict = IdDictionary(q for q, _ in pairs)
    cdict = IdDictionary(c for _, c in pairs)
    edges = [(qdict.dense(q), cdict.dense(c)) for q, c in pairs]
    return build_curriculum(len(cdict), len(qdict), edges), qdict, cdict


def write_curriculum_csv(path, cmap: CurriculumMap, qdict: IdDictionary, cdict: IdDictionary) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EDGE_HEADER)
        for q in range(cmap.n):
            for c in sorted(cmap.question_concepts[q]):
                writer.writerow([qdict.string(q), cdict.string(c)])
