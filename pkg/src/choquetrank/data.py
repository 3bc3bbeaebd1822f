"""File formats, per-query score normalization, and synthetic datasets.

Formats (all UTF-8, newline-terminated lines):

* feature file: tab-separated, header ``qid<TAB>docid<TAB><crit>...``,
  one row per (query, document) with raw criterion scores;
* qrels: whitespace-separated ``qid 0 docid grade`` in the TREC
  convention (the second field is carried but ignored);
* run file: ``qid Q0 docid rank score tag`` with 1-based consecutive
  ranks and scores printed to 6 decimal places.

Parsers fail on the first malformed line and report its line number;
there is no partial silent acceptance.

The synthetic generator draws criterion scores from a Philox counter-based
generator keyed by the seed, so datasets are bit-identical across runs and
platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .aggregate import AggregatorSpec, CriterionVector, RankedList, RankEntry
from .evaluation import Judgments
from .measure import CriterionSet

NORMALIZATION_KINDS = ("minmax", "none")


class ParseError(ValueError):
    """Malformed input file; carries the offending 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class NormalizationPolicy:
    """How raw criterion scores are mapped to the shared [0, 1] scale.

    ``minmax`` rescales each criterion within each query; a criterion that
    is constant within a query maps to ``constant_fill`` everywhere.
    ``none`` passes scores through (aggregation will still reject values
    outside [0, 1]).
    """

    kind: str = "minmax"
    constant_fill: float = 0.5

    def __post_init__(self):
        if self.kind not in NORMALIZATION_KINDS:
            raise ValueError(f"unknown normalization kind {self.kind!r}")
        if not 0.0 <= self.constant_fill <= 1.0:
            raise ValueError(f"constant_fill must be in [0, 1], got {self.constant_fill!r}")


@dataclass(frozen=True)
class JudgedDataset:
    """Criterion vectors grouped by query plus their relevance judgments.

    ``true_scores`` is populated by the synthetic generator only: the noisy
    truth value each label was thresholded on, keyed by (qid, docid).
    """

    criteria: CriterionSet
    vectors: tuple[CriterionVector, ...]
    judgments: Judgments
    true_scores: dict[tuple[str, str], float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "vectors", tuple(self.vectors))
        seen: set[tuple[str, str]] = set()
        for v in self.vectors:
            if len(v.scores) != self.criteria.n:
                raise ValueError(
                    f"vector ({v.query_id}, {v.doc_id}) has {len(v.scores)} scores, "
                    f"expected {self.criteria.n}"
                )
            key = (v.query_id, v.doc_id)
            if key in seen:
                raise ValueError(f"duplicate (qid, docid) pair {key}")
            seen.add(key)

    def by_query(self) -> dict[str, list[CriterionVector]]:
        """Vectors grouped by query id, preserving first-seen query order."""
        groups: dict[str, list[CriterionVector]] = {}
        for v in self.vectors:
            groups.setdefault(v.query_id, []).append(v)
        return groups


def parse_feature_file(path) -> JudgedDataset:
    """Read a feature TSV into a dataset (judgments left empty)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError(1, "empty feature file: missing header")
    header = lines[0].split("\t")
    if len(header) < 3:
        raise ParseError(1, "header must be 'qid<TAB>docid<TAB><criterion>...'")
    if header[0] != "qid" or header[1] != "docid":
        raise ParseError(1, f"header must start with 'qid\\tdocid', got {lines[0]!r}")
    names = header[2:]
    if len(set(names)) != len(names):
        raise ParseError(1, "duplicate criterion names in header")
    try:
        criteria = CriterionSet(tuple(names))
    except ValueError as exc:
        raise ParseError(1, str(exc)) from None

    vectors: list[CriterionVector] = []
    seen: dict[tuple[str, str], int] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != 2 + criteria.n:
            raise ParseError(
                line_no,
                f"expected {2 + criteria.n} fields, got {len(parts)}",
            )
        qid, docid = parts[0], parts[1]
        if not qid or not docid:
            raise ParseError(line_no, "empty qid or docid")
        key = (qid, docid)
        if key in seen:
            raise ParseError(line_no, f"duplicate (qid, docid) {key} (first on line {seen[key]})")
        seen[key] = line_no
        scores = []
        for text in parts[2:]:
            try:
                value = float(text)
            except ValueError:
                raise ParseError(line_no, f"non-numeric score {text!r}") from None
            if not math.isfinite(value):
                raise ParseError(line_no, f"non-finite score {text!r}")
            scores.append(value)
        vectors.append(CriterionVector(query_id=qid, doc_id=docid, scores=tuple(scores)))
    return JudgedDataset(criteria=criteria, vectors=tuple(vectors), judgments={})


def write_feature_file(dataset: JudgedDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("qid\tdocid\t" + "\t".join(dataset.criteria.names) + "\n")
        for v in dataset.vectors:
            scores = "\t".join(repr(s) for s in v.scores)
            fh.write(f"{v.query_id}\t{v.doc_id}\t{scores}\n")


def parse_qrels(path) -> Judgments:
    """Read TREC-style relevance judgments; later duplicates are an error."""
    judgments: Judgments = {}
    first_line: dict[tuple[str, str], int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                raise ParseError(line_no, "blank line")
            parts = stripped.split()
            if len(parts) != 4:
                raise ParseError(line_no, f"expected 'qid 0 docid grade', got {stripped!r}")
            qid, _iteration, docid, grade_text = parts
            try:
                grade = int(grade_text)
            except ValueError:
                raise ParseError(line_no, f"non-integer grade {grade_text!r}") from None
            if grade < 0:
                raise ParseError(line_no, f"negative grade {grade}")
            key = (qid, docid)
            if key in judgments:
                raise ParseError(
                    line_no, f"duplicate judgment for {key} (first on line {first_line[key]})"
                )
            judgments[key] = grade
            first_line[key] = line_no
    return judgments


def write_qrels(judgments: Judgments, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for (qid, docid), grade in judgments.items():
            fh.write(f"{qid} 0 {docid} {grade}\n")


def normalize(dataset: JudgedDataset, policy: NormalizationPolicy) -> JudgedDataset:
    """Map raw criterion scores onto [0, 1] according to the policy.

    Min-max is applied per criterion within each query, which preserves
    within-query order; global scaling would let one query's outliers
    squash another's spread.
    """
    if policy.kind == "none":
        return dataset
    groups = dataset.by_query()
    new_vectors: list[CriterionVector] = []
    for qid, vectors in groups.items():
        matrix = np.array([v.scores for v in vectors], dtype=np.float64)
        lo = matrix.min(axis=0)
        hi = matrix.max(axis=0)
        span = hi - lo
        out = np.empty_like(matrix)
        for c in range(matrix.shape[1]):
            if span[c] == 0.0:
                out[:, c] = policy.constant_fill
            else:
                out[:, c] = (matrix[:, c] - lo[c]) / span[c]
        for v, row in zip(vectors, out):
            new_vectors.append(
                CriterionVector(query_id=v.query_id, doc_id=v.doc_id, scores=tuple(row))
            )
    return JudgedDataset(
        criteria=dataset.criteria,
        vectors=tuple(new_vectors),
        judgments=dataset.judgments,
        true_scores=dataset.true_scores,
    )


def write_run_file(rankings, tag: str, path) -> None:
    """Write rankings in the ``qid Q0 docid rank score tag`` convention."""
    if not tag or any(ch.isspace() for ch in tag):
        raise ValueError(f"run tag must be non-empty without whitespace, got {tag!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ranking in rankings:
            for entry in ranking.entries:
                fh.write(
                    f"{ranking.query_id} Q0 {entry.doc_id} {entry.rank} "
                    f"{entry.score:.6f} {tag}\n"
                )


def parse_run_file(path) -> list[RankedList]:
    """Inverse of write_run_file up to the 6-decimal score precision.

    File order is preserved; ranks must run 1, 2, ... consecutively within
    each query and a query's lines must be contiguous.
    """
    rankings: list[RankedList] = []
    current_qid: str | None = None
    current_entries: list[RankEntry] = []
    finished: set[str] = set()
    seen_docs: set[str] = set()

    def flush():
        nonlocal current_qid, current_entries
        if current_qid is not None:
            rankings.append(RankedList(query_id=current_qid, entries=tuple(current_entries)))
            finished.add(current_qid)
        current_qid = None
        current_entries = []

    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.rstrip("\n")
            parts = stripped.split(" ")
            if len(parts) != 6:
                raise ParseError(line_no, f"expected 6 fields, got {len(parts)}")
            qid, q0, docid, rank_text, score_text, _tag = parts
            if q0 != "Q0":
                raise ParseError(line_no, f"expected literal 'Q0', got {q0!r}")
            try:
                rank = int(rank_text)
            except ValueError:
                raise ParseError(line_no, f"non-integer rank {rank_text!r}") from None
            try:
                score = float(score_text)
            except ValueError:
                raise ParseError(line_no, f"bad score {score_text!r}") from None
            if not math.isfinite(score):
                raise ParseError(line_no, f"non-finite score {score_text!r}")
            if qid != current_qid:
                if qid in finished:
                    raise ParseError(line_no, f"query {qid!r} appears in two separate blocks")
                flush()
                current_qid = qid
                seen_docs = set()
            if rank != len(current_entries) + 1:
                raise ParseError(
                    line_no,
                    f"rank gap for query {qid!r}: got {rank}, expected {len(current_entries) + 1}",
                )
            if docid in seen_docs:
                raise ParseError(line_no, f"duplicate document {docid!r} for query {qid!r}")
            seen_docs.add(docid)
            current_entries.append(RankEntry(doc_id=docid, score=score, rank=rank))
    flush()
    return rankings


TRUTH_KINDS = ("weightedSum", "min", "choquet")


def generate_synthetic(
    n_queries: int,
    docs_per_query: int,
    n_criteria: int,
    truth: AggregatorSpec,
    noise: float,
    relevance_quantile: float,
    seed: int,
) -> JudgedDataset:
    """Deterministic synthetic dataset with a known ground-truth aggregator.

    Criterion scores are uniform on [0, 1]; the truth function (weighted
    sum, min, or a Choquet capacity) plus Gaussian noise of the given
    standard deviation yields a latent score, and documents above the
    per-query quantile of that score are labeled relevant (grade 1),
    all others judged non-relevant (grade 0).

    Identical seeds produce bit-identical datasets: the Philox generator
    is keyed explicitly rather than relying on a platform default.
    """
    if n_queries < 1 or docs_per_query < 1 or n_criteria < 1:
        raise ValueError("query, document, and criterion counts must be >= 1")
    if noise < 0:
        raise ValueError(f"noise must be >= 0, got {noise!r}")
    if not 0.0 < relevance_quantile < 1.0:
        raise ValueError(f"relevance quantile must be in (0, 1), got {relevance_quantile!r}")
    kind_map = {"weightedSum": "weightedSum", "andMin": "min", "choquet": "choquet"}
    if kind_map.get(truth.kind) not in TRUTH_KINDS:
        raise ValueError(f"truth must be weightedSum, andMin (min), or choquet, got {truth.kind!r}")

    criteria = CriterionSet(tuple(f"c{i + 1}" for i in range(n_criteria)))
    rng = np.random.Generator(np.random.Philox(key=seed))
    scores = rng.random((n_queries, docs_per_query, n_criteria))
    noise_draw = rng.normal(0.0, 1.0, (n_queries, docs_per_query))

    qw = len(str(n_queries))
    dw = len(str(docs_per_query))
    vectors: list[CriterionVector] = []
    judgments: Judgments = {}
    true_scores: dict[tuple[str, str], float] = {}
    for qi in range(n_queries):
        qid = f"q{qi + 1:0{qw}d}"
        truth_values = np.empty(docs_per_query)
        query_vectors = []
        for di in range(docs_per_query):
            docid = f"d{di + 1:0{dw}d}"
            v = CriterionVector(query_id=qid, doc_id=docid, scores=tuple(scores[qi, di]))
            query_vectors.append(v)
            truth_values[di] = truth.score(v)
        noisy = truth_values + noise * noise_draw[qi]
        threshold = float(np.quantile(noisy, relevance_quantile))
        for di, v in enumerate(query_vectors):
            judgments[(qid, v.doc_id)] = 1 if noisy[di] > threshold else 0
            true_scores[(qid, v.doc_id)] = float(noisy[di])
        vectors.extend(query_vectors)
    return JudgedDataset(
        criteria=criteria,
        vectors=tuple(vectors),
        judgments=judgments,
        true_scores=true_scores,
    )
