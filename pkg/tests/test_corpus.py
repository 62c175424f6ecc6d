import random
from collections import Counter
from functools import lru_cache

import pytest
from hypothesis import given, strategies as st

from minigec.corpus import (
    AlignEdge,
    EdgeType,
    EmptyDatasetError,
    OversampleSpec,
    SentencePair,
    align_tokens,
    compute_stats,
    load_parallel,
    make_pair,
    oversample,
    oversampled_counts,
    save_pairs,
    stats_by_tag,
)


def edit_distance(a, b):
    """Independent reference: plain memoized recursion."""

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(
            d(i - 1, j - 1) + (0 if a[i - 1] == b[j - 1] else 1),
            d(i, j - 1) + 1,
            d(i - 1, j) + 1,
        )

    return d(len(a), len(b))


def replay(src, edges):
    """Rebuild the target from an edge list, checking src/tgt index order."""
    out = []
    i = 0
    j = 0
    for e in edges:
        if e.type in (EdgeType.MATCH, EdgeType.SUB):
            assert e.src == i and e.tgt == j
            i += 1
            j += 1
            out.append(e.tgt)
        elif e.type is EdgeType.INS:
            assert e.src is None and e.tgt == j
            j += 1
            out.append(e.tgt)
        else:
            assert e.tgt is None and e.src == i
            i += 1
    assert i == len(src)
    return out


class TestAlignment:
    def test_identity(self):
        a = align_tokens(("x", "y"), ("x", "y"))
        assert [e.type for e in a.edges] == [EdgeType.MATCH, EdgeType.MATCH]
        assert a.cost == 0 and a.error_rate == 0.0

    def test_substitution_carries_indices(self):
        a = align_tokens(("a", "cat"), ("the", "cat"))
        assert a.edges[0] == AlignEdge(EdgeType.SUB, 0, 0)
        assert a.edges[1] == AlignEdge(EdgeType.MATCH, 1, 1)
        assert a.error_rate == pytest.approx(0.5)

    def test_insertion(self):
        a = align_tokens(("a", "b"), ("a", "x", "b"))
        assert [e.type for e in a.edges] == [EdgeType.MATCH, EdgeType.INS, EdgeType.MATCH]
        assert a.edges[1].tgt == 1
        assert a.error_rate == pytest.approx(1 / 3)

    def test_deletion(self):
        a = align_tokens(("a", "x", "y", "b"), ("a", "b"))
        types = [e.type for e in a.edges]
        assert types == [EdgeType.MATCH, EdgeType.DEL, EdgeType.DEL, EdgeType.MATCH]
        assert a.error_rate == pytest.approx(0.5)

    def test_empty_sides(self):
        assert align_tokens((), ()).edges == ()
        assert [e.type for e in align_tokens((), ("a",)).edges] == [EdgeType.INS]
        assert [e.type for e in align_tokens(("a",), ()).edges] == [EdgeType.DEL]

    def test_prefers_diagonal_on_ties(self):
        # ab -> ba can be SUB+SUB or INS+DEL chains; diagonal wins.
        a = align_tokens(("a", "b"), ("b", "a"))
        assert [e.type for e in a.edges] == [EdgeType.SUB, EdgeType.SUB]

    def test_cost_matches_reference_on_random_pairs(self):
        rng = random.Random(5)
        alphabet = "abcd"
        for _ in range(400):
            src = tuple(rng.choice(alphabet) for _ in range(rng.randint(0, 7)))
            tgt = tuple(rng.choice(alphabet) for _ in range(rng.randint(0, 7)))
            a = align_tokens(src, tgt)
            assert a.cost == edit_distance(src, tgt)
            assert [tgt[k] for k in replay(src, a.edges)] == list(tgt)

    @given(
        st.lists(st.sampled_from("ab"), max_size=6).map(tuple),
        st.lists(st.sampled_from("ab"), max_size=6).map(tuple),
    )
    def test_cost_is_minimal(self, src, tgt):
        assert align_tokens(src, tgt).cost == edit_distance(src, tgt)


class TestStats:
    def test_micro_average(self):
        pairs = [
            make_pair("a b c", "a b c"),        # 3 edges, 0 errors
            make_pair("a x c", "a b c"),        # 3 edges, 1 error
        ]
        st_ = compute_stats(pairs)
        assert st_.sentence_count == 2
        assert st_.total_edges == 6
        assert st_.nonmatch_edges == 1
        assert st_.error_rate == pytest.approx(1 / 6)

    def test_identity_pairs_count_as_matches(self):
        st_ = compute_stats([make_pair("a b c d", "a b c d")])
        assert st_.error_rate == 0.0
        assert st_.total_edges == 4

    def test_by_tag(self):
        pairs = [
            SentencePair(("a",), ("b",), "noisy"),
            SentencePair(("a",), ("a",), "clean"),
        ]
        grouped = stats_by_tag(pairs)
        assert set(grouped) == {"clean", "noisy"}
        assert grouped["noisy"].error_rate == 1.0
        assert grouped["clean"].error_rate == 0.0

    def test_empty_dataset_is_an_error(self):
        with pytest.raises(EmptyDatasetError):
            compute_stats([])
        with pytest.raises(EmptyDatasetError):
            stats_by_tag([])


class TestOversample:
    def make_corpus(self):
        return [
            SentencePair(("s", str(i)), ("t", str(i)), tag)
            for i, tag in enumerate(["big"] * 6 + ["small"] * 2)
        ]

    def test_multiplier_is_total_copies(self):
        pairs = self.make_corpus()
        out = oversample(pairs, OversampleSpec({"small": 5}), seed=3)
        assert len(out) == 6 + 2 * 5
        counts = Counter(out)
        for p in pairs:
            assert counts[p] == (5 if p.dataset_tag == "small" else 1)

    def test_deterministic_shuffle(self):
        pairs = self.make_corpus()
        spec = OversampleSpec({"small": 3})
        assert oversample(pairs, spec, seed=11) == oversample(pairs, spec, seed=11)
        assert oversample(pairs, spec, seed=11) != oversample(pairs, spec, seed=12)

    def test_strict_rejects_unknown_tags(self):
        pairs = self.make_corpus()
        spec = OversampleSpec({"typo": 4})
        with pytest.raises(ValueError, match="absent from the corpus"):
            oversample(pairs, spec, strict=True)
        # lenient mode ignores it
        assert len(oversample(pairs, spec, strict=False)) == len(pairs)

    def test_spec_validation(self):
        with pytest.raises(ValueError, match="positive integer"):
            OversampleSpec({"a": 0}).validate()
        with pytest.raises(ValueError, match="positive integer"):
            OversampleSpec({"a": 2.5}).validate()

    def test_count_arithmetic(self):
        counts = {"a": 10, "b": 7}
        out = oversampled_counts(counts, OversampleSpec({"b": 3}))
        assert out == {"a": 10, "b": 21}


class TestIO:
    def test_tsv_roundtrip(self, tmp_path):
        pairs = [make_pair("teh cat , sat", "the cat sat"), make_pair("a b", "a b")]
        path = tmp_path / "pairs.tsv"
        assert save_pairs(pairs, path) == 2
        assert load_parallel(path) == [
            SentencePair(p.source, p.target, "default") for p in pairs
        ]

    def test_tsv_bad_column_count(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("a\tb\nc\td\te\n", encoding="utf-8")
        with pytest.raises(ValueError, match="row 2"):
            load_parallel(path)

    def test_tsv_empty_side(self, tmp_path):
        path = tmp_path / "bad.tsv"
        # an all-whitespace side tokenizes to nothing
        path.write_text("a\tb\n \tx\n", encoding="utf-8")
        with pytest.raises(ValueError, match="row 2: empty source"):
            load_parallel(path)

    def test_two_files(self, tmp_path):
        (tmp_path / "src.txt").write_text("a x\nb\n", encoding="utf-8")
        (tmp_path / "tgt.txt").write_text("a y\nb\n", encoding="utf-8")
        pairs = load_parallel(
            tmp_path / "src.txt", fmt="two-files", target_path=tmp_path / "tgt.txt",
            dataset_tag="mined",
        )
        assert pairs[0] == SentencePair(("a", "x"), ("a", "y"), "mined")

    def test_two_files_length_mismatch(self, tmp_path):
        (tmp_path / "src.txt").write_text("a\nb\n", encoding="utf-8")
        (tmp_path / "tgt.txt").write_text("a\n", encoding="utf-8")
        with pytest.raises(ValueError, match="line count mismatch"):
            load_parallel(tmp_path / "src.txt", fmt="two-files", target_path=tmp_path / "tgt.txt")

    def test_unknown_format(self, tmp_path):
        (tmp_path / "x").write_text("", encoding="utf-8")
        with pytest.raises(ValueError, match="unknown corpus format"):
            load_parallel(tmp_path / "x", fmt="jsonl")
