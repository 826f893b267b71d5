"""Direction-matrix evaluation and aggregate analyses.

An EvalMatrix holds corpus spBLEU for src -> tgt directions (row = source,
column = target, diagonal undefined).  On top of it: grouped averages by
resource bin or language family, spectral clustering of the induced
affinity, direct-vs-pivot deltas, and per-bucket breakdowns by sentence
length or domain.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import AlignedCorpus, bucket_by_length
from .errors import DomainError
from .metrics import BleuScore, sp_bleu
from .tokenizer import SubwordModel

FAMILIES = (
    "afro_asiatic",
    "austronesian",
    "balto_slavic",
    "bantu",
    "dravidian",
    "germanic",
    "indo_aryan",
    "nilotic_other",
    "romance",
    "sino_tibetan_kra_dai",
    "turkic",
)
RESOURCE_BINS = ("very_low", "low", "medium", "high")


class MisalignedHypothesis(DomainError):
    pass


class UnknownDirection(DomainError):
    pass


class MissingMeta(DomainError):
    pass


class DegenerateMatrix(DomainError):
    pass


class ShapeMismatch(DomainError):
    pass


class MatrixFormatError(DomainError):
    pass


@dataclass(frozen=True)
class EvalMatrix:
    """Square direction-score table; cells are present only when scored."""

    languages: tuple[str, ...]
    scores: dict[tuple[str, str], float]

    def get(self, src: str, tgt: str) -> float | None:
        return self.scores.get((src, tgt))

    def defined_cells(self) -> list[tuple[str, str, float]]:
        return [
            (src, tgt, score)
            for (src, tgt), score in sorted(self.scores.items())
        ]


def write_matrix(matrix: EvalMatrix, path: str | Path) -> None:
    """TSV with language codes as header row and column; empty diagonal."""
    lines = ["\t" + "\t".join(matrix.languages)]
    for src in matrix.languages:
        cells = []
        for tgt in matrix.languages:
            score = matrix.get(src, tgt)
            cells.append("" if src == tgt or score is None else repr(score))
        lines.append(src + "\t" + "\t".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_matrix(path: str | Path) -> EvalMatrix:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("\t"):
        raise MatrixFormatError(f"{path}: missing language header row")
    languages = tuple(lines[0].split("\t")[1:])
    scores: dict[tuple[str, str], float] = {}
    if len(lines) - 1 != len(languages):
        raise MatrixFormatError(
            f"{path}: {len(languages)} header languages but {len(lines) - 1} rows"
        )
    for line in lines[1:]:
        fields = line.split("\t")
        if len(fields) != len(languages) + 1:
            raise MatrixFormatError(f"{path}: ragged row {fields[0]!r}")
        src = fields[0]
        if src not in languages:
            raise MatrixFormatError(f"{path}: row language {src!r} not in header")
        for tgt, cell in zip(languages, fields[1:]):
            if cell == "":
                continue
            try:
                scores[(src, tgt)] = float(cell)
            except ValueError:
                raise MatrixFormatError(f"{path}: bad cell {cell!r} at ({src}, {tgt})")
    return EvalMatrix(languages=languages, scores=scores)


def evaluate_matrix(
    corpus: AlignedCorpus,
    hypotheses: Mapping[tuple[str, str], Sequence[str]],
    model: SubwordModel,
) -> EvalMatrix:
    """Corpus spBLEU of every provided direction against the target side.

    Directions without a hypothesis file stay absent; a line-count mismatch
    is an error rather than a silent truncation.
    """
    scores: dict[tuple[str, str], float] = {}
    for (src, tgt), hyp_lines in sorted(hypotheses.items()):
        if src not in corpus.languages or tgt not in corpus.languages:
            raise UnknownDirection(f"direction {src}->{tgt} not in corpus")
        if src == tgt:
            raise UnknownDirection(f"self-direction {src}->{tgt}")
        ref_lines = corpus.texts(tgt)
        if len(hyp_lines) != len(ref_lines):
            raise MisalignedHypothesis(
                f"{src}->{tgt}: {len(hyp_lines)} hypothesis lines, "
                f"{len(ref_lines)} references"
            )
        scores[(src, tgt)] = sp_bleu(model, list(hyp_lines), ref_lines, "corpus").score
    return EvalMatrix(languages=corpus.languages, scores=scores)


def resource_bin(bitext_count: int) -> str:
    """Bin by English-aligned bitext volume; boundaries are lower-inclusive."""
    if bitext_count < 0:
        raise ValueError(f"negative bitext count {bitext_count}")
    if bitext_count < 100_000:
        return "very_low"
    if bitext_count < 1_000_000:
        return "low"
    if bitext_count < 100_000_000:
        return "medium"
    return "high"


@dataclass(frozen=True)
class LanguageMeta:
    code: str
    family: str
    bitext_with_english: int
    mono_sentences: int

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")

    @property
    def resource_bin(self) -> str:
        return resource_bin(self.bitext_with_english)


META_HEADER = ("code", "family", "bitext_with_english", "mono_sentences")


def read_language_meta(path: str | Path) -> list[LanguageMeta]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or tuple(lines[0].split("\t")) != META_HEADER:
        raise MissingMeta(f"{path}: bad or missing header")
    metas = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != 4:
            raise MissingMeta(f"{path} line {lineno}: expected 4 fields")
        try:
            metas.append(
                LanguageMeta(
                    code=fields[0],
                    family=fields[1],
                    bitext_with_english=int(fields[2]),
                    mono_sentences=int(fields[3]),
                )
            )
        except ValueError as exc:
            raise MissingMeta(f"{path} line {lineno}: {exc}") from exc
    return metas


@dataclass(frozen=True)
class GroupedTable:
    groups: tuple[str, ...]
    cells: dict[tuple[str, str], float | None]
    counts: dict[tuple[str, str], int]
    row_avg: dict[str, float | None]
    col_avg: dict[str, float | None]
    overall: float | None


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


def group_average(
    matrix: EvalMatrix,
    meta: Sequence[LanguageMeta],
    axis_grouping: str = "resource_bin",
) -> GroupedTable:
    """Mean score per (source group, target group), diagonal excluded.

    Margins are plain means of the defined group cells in each row and
    column, matching the Avg row/column convention of grouped tables.
    """
    if axis_grouping not in ("resource_bin", "family"):
        raise ValueError(f"unknown grouping {axis_grouping!r}")
    by_code = {m.code: m for m in meta}
    for lang in matrix.languages:
        if lang not in by_code:
            raise MissingMeta(f"no metadata for language {lang!r}")

    def group_of(code: str) -> str:
        m = by_code[code]
        return m.resource_bin if axis_grouping == "resource_bin" else m.family

    ordering = RESOURCE_BINS if axis_grouping == "resource_bin" else FAMILIES
    present = sorted(
        {group_of(lang) for lang in matrix.languages}, key=ordering.index
    )
    sums: dict[tuple[str, str], float] = {}
    counts: dict[tuple[str, str], int] = {}
    for (src, tgt), score in matrix.scores.items():
        if src == tgt:
            continue
        key = (group_of(src), group_of(tgt))
        sums[key] = sums.get(key, 0.0) + score
        counts[key] = counts.get(key, 0) + 1
    cells: dict[tuple[str, str], float | None] = {}
    for g in present:
        for h in present:
            n = counts.get((g, h), 0)
            cells[(g, h)] = sums[(g, h)] / n if n else None
    row_avg = {
        g: _mean([cells[(g, h)] for h in present if cells[(g, h)] is not None])
        for g in present
    }
    col_avg = {
        h: _mean([cells[(g, h)] for g in present if cells[(g, h)] is not None])
        for h in present
    }
    overall = _mean([v for v in cells.values() if v is not None])
    return GroupedTable(
        groups=tuple(present),
        cells=cells,
        counts={k: counts.get(k, 0) for k in cells},
        row_avg=row_avg,
        col_avg=col_avg,
        overall=overall,
    )


@dataclass(frozen=True)
class ClusterResult:
    languages: tuple[str, ...]
    assignment: dict[str, int]
    order: tuple[str, ...]
    reordered: EvalMatrix


def _kmeans(
    points: np.ndarray, k: int, seed: int, restarts: int = 50
) -> np.ndarray:
    """Seeded Lloyd iterations, best inertia over the given restarts."""
    n = len(points)
    rng = random.Random(seed)
    best_labels: np.ndarray | None = None
    best_inertia = math.inf
    for _ in range(restarts):
        centers = points[rng.sample(range(n), k)].copy()
        labels = np.zeros(n, dtype=int)
        for _ in range(100):
            distances = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_labels = distances.argmin(axis=1)
            for cluster in range(k):
                mask = new_labels == cluster
                if mask.any():
                    centers[cluster] = points[mask].mean(axis=0)
                else:
                    # reseat an empty cluster on the worst-served point
                    farthest = int(distances.min(axis=1).argmax())
                    centers[cluster] = points[farthest]
                    new_labels[farthest] = cluster
            if (new_labels == labels).all():
                break
            labels = new_labels
        inertia = float(
            ((points - centers[labels]) ** 2).sum()
        )
        if inertia < best_inertia:
            best_inertia = inertia
            best_labels = labels.copy()
    assert best_labels is not None
    return best_labels


def spectral_cluster(
    matrix: EvalMatrix, k: int = 8, seed: int = 0
) -> ClusterResult:
    """Cluster languages by mutual translation quality.

    Affinity is the symmetrized score matrix (M + M^T)/2 with the diagonal
    set to each row's maximum, clustered through the normalized graph
    Laplacian: k smallest-eigenvalue eigenvectors, row-normalized, then
    seeded k-means with 50 restarts.  Languages in the result are ordered
    cluster-contiguously.
    """
    langs = matrix.languages
    n = len(langs)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > n:
        raise ValueError(f"k = {k} exceeds {n} languages")
    raw = np.zeros((n, n))
    for i, src in enumerate(langs):
        for j, tgt in enumerate(langs):
            if i == j:
                continue
            score = matrix.get(src, tgt)
            if score is None:
                raise DegenerateMatrix(f"cell ({src}, {tgt}) undefined")
            if not math.isfinite(score) or score < 0:
                raise DegenerateMatrix(f"cell ({src}, {tgt}) = {score}")
            raw[i, j] = score
    affinity = (raw + raw.T) / 2.0
    off_diagonal = affinity + np.diag(np.full(n, -np.inf))
    np.fill_diagonal(affinity, off_diagonal.max(axis=1))

    degree = affinity.sum(axis=1)
    if (degree <= 0).any():
        raise DegenerateMatrix("zero-degree language in affinity")
    inv_sqrt = 1.0 / np.sqrt(degree)
    laplacian = np.eye(n) - inv_sqrt[:, None] * affinity * inv_sqrt[None, :]
    eigenvalues, eigenvectors = np.linalg.eigh(laplacian)
    embedding = eigenvectors[:, np.argsort(eigenvalues)[:k]]
    norms = np.linalg.norm(embedding, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    embedding = embedding / norms

    labels = _kmeans(embedding, k, seed)
    # canonical labels: clusters numbered by first appearance
    relabel: dict[int, int] = {}
    for label in labels:
        if int(label) not in relabel:
            relabel[int(label)] = len(relabel)
    assignment = {lang: relabel[int(label)] for lang, label in zip(langs, labels)}
    order = tuple(
        sorted(langs, key=lambda lang: (assignment[lang], langs.index(lang)))
    )
    reordered = EvalMatrix(languages=order, scores=dict(matrix.scores))
    return ClusterResult(
        languages=langs, assignment=assignment, order=order, reordered=reordered
    )


@dataclass(frozen=True)
class PivotComparison:
    delta: EvalMatrix
    n_compared: int
    n_direct_wins: int
    fraction_direct_wins: float


def pivot_compare(
    direct: EvalMatrix, via_pivot: EvalMatrix, pivot: str
) -> PivotComparison:
    """Per-direction delta (direct - pivot-routed) and the winning share.

    Directions touching the pivot itself are excluded; a cell is compared
    only when both matrices define it.
    """
    if set(direct.languages) != set(via_pivot.languages):
        raise ShapeMismatch("matrices cover different language sets")
    deltas: dict[tuple[str, str], float] = {}
    wins = 0
    for src in direct.languages:
        for tgt in direct.languages:
            if src == tgt or pivot in (src, tgt):
                continue
            d = direct.get(src, tgt)
            p = via_pivot.get(src, tgt)
            if d is None or p is None:
                continue
            deltas[(src, tgt)] = d - p
            if d - p > 0:
                wins += 1
    n = len(deltas)
    return PivotComparison(
        delta=EvalMatrix(languages=direct.languages, scores=deltas),
        n_compared=n,
        n_direct_wins=wins,
        fraction_direct_wins=wins / n if n else 0.0,
    )


def length_breakdown(
    corpus: AlignedCorpus,
    pivot_language: str,
    target_language: str,
    hyp_lines: Sequence[str],
    model: SubwordModel,
    boundaries: tuple[int, int] = (15, 25),
) -> list[tuple[str, int, BleuScore | None]]:
    """Corpus spBLEU per pivot-side length bucket (short/medium/long)."""
    ref_lines = corpus.texts(target_language)
    if len(hyp_lines) != len(ref_lines):
        raise MisalignedHypothesis(
            f"{len(hyp_lines)} hypothesis lines, {len(ref_lines)} references"
        )
    buckets = bucket_by_length(corpus, pivot_language, boundaries)
    rows = []
    for name in ("short", "medium", "long"):
        positions = buckets[name]
        if positions:
            score = sp_bleu(
                model,
                [hyp_lines[i] for i in positions],
                [ref_lines[i] for i in positions],
                "corpus",
            )
        else:
            score = None
        rows.append((name, len(positions), score))
    return rows


def domain_breakdown(
    corpus: AlignedCorpus,
    target_language: str,
    hyp_lines: Sequence[str],
    model: SubwordModel,
) -> list[tuple[str, int, BleuScore | None]]:
    """Corpus spBLEU per metadata domain of the aligned lines."""
    records = corpus.sentences[target_language]
    ref_lines = [r.text for r in records]
    if len(hyp_lines) != len(ref_lines):
        raise MisalignedHypothesis(
            f"{len(hyp_lines)} hypothesis lines, {len(ref_lines)} references"
        )
    by_domain: dict[str, list[int]] = {}
    for position, record in enumerate(records):
        if record.domain is None:
            raise MissingMeta("corpus loaded without domain metadata")
        by_domain.setdefault(record.domain, []).append(position)
    rows = []
    for name in sorted(by_domain):
        positions = by_domain[name]
        score = sp_bleu(
            model,
            [hyp_lines[i] for i in positions],
            [ref_lines[i] for i in positions],
            "corpus",
        )
        rows.append((name, len(positions), score))
    return rows
