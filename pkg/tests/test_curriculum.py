"""Curriculum map construction, candidate filtering, and log ingestion."""

import numpy as np
import pytest

from hierrec.curriculum import (IdDictionary, RawLogRow, build_curriculum, identity_curriculum,
                                parse_logs, questions_for_concepts, read_curriculum_csv,
                                read_log_csv, validate_curriculum, write_curriculum_csv,
                                write_log_csv)
from hierrec.errors import EmptyCandidateSet, MalformedRow, OrphanQuestion, OutOfRangeId


class TestBuildCurriculum:
    def test_edge_transpose(self, small_map):
        assert small_map.questions_of(0) == {0, 1}
        assert small_map.questions_of(1) == {1, 2}
        assert small_map.concepts_of(1) == {0, 1}

    def test_one_to_one_regime(self):
        cmap = identity_curriculum(1)
        assert cmap.m == cmap.n == 1
        assert cmap.questions_of(0) == {0}

    def test_large_cardinalities_accepted(self):
        # ASSIST09-scale: 121 concepts, 15003 questions
        edges = [(q, q % 121) for q in range(15003)]
        cmap = build_curriculum(121, 15003, edges)
        assert cmap.m == 121 and cmap.n == 15003

    def test_out_of_range_ids(self):
        with pytest.raises(OutOfRangeId):
            build_curriculum(2, 3, [(0, 0), (3, 1)])
        with pytest.raises(OutOfRangeId):
            build_curriculum(2, 3, [(0, 2)])

    def test_orphan_question_rejected(self):
        with pytest.raises(OrphanQuestion):
            build_curriculum(2, 3, [(0, 0), (1, 1)])  # question 2 has no concept
        with pytest.raises(OrphanQuestion):
            build_curriculum(1, 1, [])

    def test_edge_round_trip(self, rng):
        for _ in range(20):
            m, n = int(rng.integers(1, 6)), int(rng.integers(1, 12))
            edges = {(q, int(rng.integers(m))) for q in range(n)}
            extra = {(int(rng.integers(n)), int(rng.integers(m))) for _ in range(5)}
            edges |= extra
            cmap = build_curriculum(m, n, edges)
            assert cmap.edges == frozenset(edges)


class TestQuestionsForConcepts:
    def test_single_concept(self, small_map):
        assert questions_for_concepts(small_map, {0}) == {0, 1}

    def test_union_of_two(self, small_map):
        assert questions_for_concepts(small_map, {0, 1}) == {0, 1, 2}

    def test_empty_selection(self, small_map):
        with pytest.raises(EmptyCandidateSet):
            questions_for_concepts(small_map, set())

    def test_union_homomorphism(self, rng):
        cmap = build_curriculum(5, 20, [(q, int(rng.integers(5))) for q in range(20)])
        for _ in range(50):
            s1 = set(rng.choice(5, size=rng.integers(1, 4), replace=False).tolist())
            s2 = set(rng.choice(5, size=rng.integers(1, 4), replace=False).tolist())
            lhs = questions_for_concepts(cmap, s1 | s2)
            assert lhs == questions_for_concepts(cmap, s1) | questions_for_concepts(cmap, s2)

    def test_membership_consistency(self, small_map):
        for q in range(small_map.n):
            for c in small_map.concepts_of(q):
                assert q in questions_for_concepts(small_map, {c})


class TestParseLogs:
    @pytest.fixture
    def qdict(self):
        return IdDictionary([f"q{i}" for i in range(5)])

    def test_timestamp_order(self, qdict):
        rows = [
            RawLogRow("s1", "q0", 1, "a", 30),
            RawLogRow("s1", "q1", 0, "a", 10),
            RawLogRow("s1", "q2", 1, "a", 20),
        ]
        histories, report = parse_logs(rows, qdict)
        hist = histories[("s1", "a")]
        assert [r.question for r in hist] == [qdict.dense("q1"), qdict.dense("q2"), qdict.dense("q0")]
        assert report.n_rows == 3 and report.n_sessions == 1

    def test_tie_broken_by_input_order(self, qdict):
        rows = [RawLogRow("s1", "q1", 1, "a", 5), RawLogRow("s1", "q2", 0, "a", 5)]
        histories, _ = parse_logs(rows, qdict)
        assert [r.question for r in histories[("s1", "a")]] == [qdict.dense("q1"), qdict.dense("q2")]

    def test_two_sessions(self, qdict):
        rows = [RawLogRow("s1", "q0", 1, "a", 0), RawLogRow("s1", "q0", 0, "b", 0)]
        histories, _ = parse_logs(rows, qdict)
        assert len(histories) == 2
        assert all(len(h) == 1 for h in histories.values())

    def test_bad_correctness(self, qdict):
        with pytest.raises(MalformedRow):
            parse_logs([RawLogRow("s1", "q0", 2, "a", 0)], qdict)

    def test_unknown_question_counted(self, qdict):
        rows = [RawLogRow("s1", "zzz", 1, "a", 0), RawLogRow("s1", "q0", 1, "a", 1)]
        histories, report = parse_logs(rows, qdict)
        assert report.unknown_question_counts == {"zzz": 1}
        assert len(histories[("s1", "a")]) == 1

    def test_deterministic(self, qdict, rng):
        rows = [
            RawLogRow(f"s{rng.integers(3)}", f"q{rng.integers(5)}", int(rng.integers(2)),
                      f"e{rng.integers(2)}", int(rng.integers(100)))
            for _ in range(200)
        ]
        first, _ = parse_logs(rows, qdict)
        second, _ = parse_logs(rows, qdict)
        assert first == second


class TestValidateCurriculum:
    def test_counts(self, small_map):
        report = validate_curriculum(small_map, k=1)
        assert report.per_concept_counts == {0: 2, 1: 2}
        assert report.candidate_bound == 2

    def test_one_to_one_counts(self):
        report = validate_curriculum(identity_curriculum(4), k=1)
        assert all(c == 1 for c in report.per_concept_counts.values())

    def test_scale_inequality(self):
        edges = [(q, q % 121) for q in range(15003)]
        report = validate_curriculum(build_curriculum(121, 15003, edges), k=2)
        assert report.m_much_less_than_n
        assert any("m < n: True" in line for line in report.lines())


class TestCsvIo:
    def test_log_round_trip(self, tmp_path):
        rows = [RawLogRow("s1", "q0001", 1, "a", 3), RawLogRow("s2", "q0002", 0, "b", 1)]
        path = tmp_path / "logs.csv"
        write_log_csv(path, rows)
        assert list(read_log_csv(path)) == rows

    def test_log_header_enforced(self, tmp_path):
        path = tmp_path / "logs.csv"
        path.write_text("foo,bar\n1,2\n")
        with pytest.raises(MalformedRow):
            list(read_log_csv(path))

    def test_comments_ignored(self, tmp_path):
        path = tmp_path / "logs.csv"
        path.write_text(
            "student_id,question_id,correct,session_id,timestamp\n"
            "# a comment line\n"
            "s1,q1,1,a,0\n"
        )
        assert len(list(read_log_csv(path))) == 1

    def test_curriculum_round_trip(self, tmp_path, small_map):
        qdict = IdDictionary([f"q{i:02d}" for i in range(3)])
        cdict = IdDictionary([f"c{i:02d}" for i in range(2)])
        path = tmp_path / "edges.csv"
        write_curriculum_csv(path, small_map, qdict, cdict)
        loaded, qd2, cd2 = read_curriculum_csv(path)
        assert loaded.edges == small_map.edges
        assert len(qd2) == 3 and len(cd2) == 2

    def test_dictionary_sorted_and_persisted(self, tmp_path):
        d = IdDictionary(["b", "a", "c", "a"])
        assert [d.string(i) for i in range(3)] == ["a", "b", "c"]
        path = tmp_path / "dict.txt"
        d.save(path)
        loaded = IdDictionary.load(path)
        assert loaded.dense("b") == d.dense("b")
