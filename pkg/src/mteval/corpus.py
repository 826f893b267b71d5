"""Loading, validating and summarizing multilingually aligned corpora.

The on-disk release format is one UTF-8 sentence file per language and
split (filename `<lang>.<split>`, LF line endings, either flat in the root
or under per-split directories), plus an optional tab-separated metadata
sidecar keyed by (split, line index).  Sentence bytes are preserved
exactly; normalization is a metric-side concern.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import DomainError

SPLITS = ("dev", "devtest", "test")
DOMAINS = ("wikinews", "wikijunior", "wikivoyage")
TOPICS = (
    "crime",
    "disasters",
    "entertainment",
    "geography",
    "health",
    "nature",
    "politics",
    "science",
    "sports",
    "travel",
)

METADATA_HEADER = (
    "split",
    "line",
    "article_id",
    "domain",
    "topic",
    "url",
    "has_links",
    "has_image",
)


class MissingFile(DomainError):
    pass


class MisalignedCorpus(DomainError):
    pass


class MalformedMetadata(DomainError):
    pass


class UnknownLanguage(DomainError):
    pass


class InvalidBoundaries(DomainError):
    pass


@dataclass(frozen=True)
class SentenceRecord:
    """One sentence of one language, with the line-level metadata shared by
    every language at this (split, line) position.

    Metadata fields are None when the corpus was loaded without a metadata
    table; when present they come from the closed enum sets above.
    """

    id: int
    text: str
    split: str
    domain: str | None = None
    topic: str | None = None
    url: str | None = None
    has_linked_entities: bool | None = None
    has_image: bool | None = None
    article_id: str | None = None


@dataclass(frozen=True)
class AlignedCorpus:
    languages: tuple[str, ...]
    sentences: dict[str, list[SentenceRecord]]

    def n_lines(self) -> int:
        return len(self.sentences[self.languages[0]])

    def texts(self, language: str, split: str | None = None) -> list[str]:
        if language not in self.sentences:
            raise UnknownLanguage(f"language {language!r} not in corpus")
        return [
            r.text
            for r in self.sentences[language]
            if split is None or r.split == split
        ]


@dataclass(frozen=True)
class StatsReport:
    total_sentences: int
    split_counts: dict[str, int]
    domain_counts: dict[str, int]
    topic_counts: dict[str, int]
    article_count: int
    avg_words_per_sentence: float
    pct_articles_with_links: float
    pct_articles_with_images: float

    def as_dict(self) -> dict:
        return {
            "total_sentences": self.total_sentences,
            "split_counts": dict(self.split_counts),
            "domain_counts": dict(self.domain_counts),
            "topic_counts": dict(self.topic_counts),
            "article_count": self.article_count,
            "avg_words_per_sentence": self.avg_words_per_sentence,
            "pct_articles_with_links": self.pct_articles_with_links,
            "pct_articles_with_images": self.pct_articles_with_images,
        }


def _parse_bool(value: str, context: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes"):
        return True
    if lowered in ("0", "false", "no"):
        return False
    raise MalformedMetadata(f"{context}: bad boolean {value!r}")


def _read_lines(path: Path) -> list[str]:
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def _sentence_file(root: Path, language: str, split: str) -> Path | None:
    nested = root / split / f"{language}.{split}"
    if nested.is_file():
        return nested
    flat = root / f"{language}.{split}"
    if flat.is_file():
        return flat
    return None


def load_metadata(path: str | Path) -> dict[tuple[str, int], dict]:
    """Parse the metadata sidecar into a (split, line) keyed table."""
    path = Path(path)
    lines = _read_lines(path)
    if not lines or tuple(lines[0].split("\t")) != METADATA_HEADER:
        raise MalformedMetadata(f"{path}: bad or missing header")
    table: dict[tuple[str, int], dict] = {}
    for lineno, row in enumerate(lines[1:], start=2):
        fields = row.split("\t")
        if len(fields) != len(METADATA_HEADER):
            raise MalformedMetadata(f"{path} line {lineno}: expected 8 fields")
        split, line_str, article_id, domain, topic, url, links, image = fields
        context = f"{path} line {lineno}"
        if split not in SPLITS:
            raise MalformedMetadata(f"{context}: unknown split {split!r}")
        if domain not in DOMAINS:
            raise MalformedMetadata(f"{context}: unknown domain {domain!r}")
        if topic not in TOPICS:
            raise MalformedMetadata(f"{context}: unknown topic {topic!r}")
        try:
            line_index = int(line_str)
        except ValueError:
            raise MalformedMetadata(f"{context}: bad line index {line_str!r}")
        table[(split, line_index)] = {
            "article_id": article_id,
            "domain": domain,
            "topic": topic,
            "url": url,
            "has_linked_entities": _parse_bool(links, context),
            "has_image": _parse_bool(image, context),
        }
    return table


def load_corpus(
    root_path: str | Path,
    languages: Sequence[str],
    splits: Sequence[str] = ("dev", "devtest"),
    metadata: str | Path | None = "auto",
) -> AlignedCorpus:
    """Load aligned sentence files and verify cross-language alignment.

    metadata may be a path, None (skip), or "auto" (use root/metadata.tsv
    when it exists).  Splits with no file for any requested language raise
    MissingFile; differing line counts raise MisalignedCorpus naming the
    offending language.
    """
    root = Path(root_path)
    if not languages:
        raise MissingFile("no languages requested")
    if len(set(languages)) != len(languages):
        raise MisalignedCorpus("duplicate language codes requested")
    for split in splits:
        if split not in SPLITS:
            raise MissingFile(f"unknown split {split!r}")

    meta_table: dict[tuple[str, int], dict] | None = None
    if metadata == "auto":
        default = root / "metadata.tsv"
        if default.is_file():
            meta_table = load_metadata(default)
    elif metadata is not None:
        meta_table = load_metadata(metadata)

    per_language: dict[str, list[SentenceRecord]] = {lang: [] for lang in languages}
    for split in splits:
        split_lines: dict[str, list[str]] = {}
        for lang in languages:
            path = _sentence_file(root, lang, split)
            if path is None:
                raise MissingFile(f"no {lang}.{split} under {root}")
            split_lines[lang] = _read_lines(path)
        reference_lang = languages[0]
        expected = len(split_lines[reference_lang])
        for lang in languages:
            if len(split_lines[lang]) != expected:
                raise MisalignedCorpus(
                    f"{lang}.{split} has {len(split_lines[lang])} lines, "
                    f"{reference_lang}.{split} has {expected}"
                )
        for lang in languages:
            for index, text in enumerate(split_lines[lang]):
                meta = (meta_table or {}).get((split, index))
                if meta_table is not None and meta is None:
                    raise MalformedMetadata(
                        f"no metadata row for {split} line {index}"
                    )
                per_language[lang].append(
                    SentenceRecord(id=index, text=text, split=split, **(meta or {}))
                )
    return AlignedCorpus(languages=tuple(languages), sentences=per_language)


def save_corpus(corpus: AlignedCorpus, root_path: str | Path) -> None:
    """Write the corpus back in release format (split directories plus a
    metadata sidecar when metadata is present)."""
    root = Path(root_path)
    splits = sorted(
        {r.split for r in corpus.sentences[corpus.languages[0]]},
        key=SPLITS.index,
    )
    for split in splits:
        (root / split).mkdir(parents=True, exist_ok=True)
        for lang in corpus.languages:
            lines = [r.text for r in corpus.sentences[lang] if r.split == split]
            (root / split / f"{lang}.{split}").write_text(
                "\n".join(lines) + "\n", encoding="utf-8", newline="\n"
            )
    pivot_records = corpus.sentences[corpus.languages[0]]
    if any(r.domain is not None for r in pivot_records):
        rows = ["\t".join(METADATA_HEADER)]
        for record in pivot_records:
            rows.append(
                "\t".join(
                    [
                        record.split,
                        str(record.id),
                        record.article_id or "",
                        record.domain or "",
                        record.topic or "",
                        record.url or "",
                        "1" if record.has_linked_entities else "0",
                        "1" if record.has_image else "0",
                    ]
                )
            )
        (root / "metadata.tsv").write_text(
            "\n".join(rows) + "\n", encoding="utf-8", newline="\n"
        )


def word_count(text: str) -> int:
    """Words are maximal runs of non-whitespace."""
    return len(text.split())


def corpus_stats(corpus: AlignedCorpus, pivot_language: str) -> StatsReport:
    """Summarize the corpus; word counts are measured on the pivot side."""
    if pivot_language not in corpus.sentences:
        raise UnknownLanguage(f"pivot {pivot_language!r} not in corpus")
    records = corpus.sentences[pivot_language]
    split_counts: dict[str, int] = {}
    domain_counts: dict[str, int] = {}
    topic_counts: dict[str, int] = {}
    articles: dict[str, dict[str, bool]] = {}
    words = 0
    for record in records:
        split_counts[record.split] = split_counts.get(record.split, 0) + 1
        words += word_count(record.text)
        if record.domain is not None:
            domain_counts[record.domain] = domain_counts.get(record.domain, 0) + 1
        if record.topic is not None:
            topic_counts[record.topic] = topic_counts.get(record.topic, 0) + 1
        if record.article_id is not None:
            flags = articles.setdefault(
                record.article_id, {"links": False, "image": False}
            )
            flags["links"] = flags["links"] or bool(record.has_linked_entities)
            flags["image"] = flags["image"] or bool(record.has_image)
    n_articles = len(articles)
    with_links = sum(1 for f in articles.values() if f["links"])
    with_images = sum(1 for f in articles.values() if f["image"])
    return StatsReport(
        total_sentences=len(records),
        split_counts=split_counts,
        domain_counts=domain_counts,
        topic_counts=topic_counts,
        article_count=n_articles,
        avg_words_per_sentence=words / len(records) if records else 0.0,
        pct_articles_with_links=100.0 * with_links / n_articles if n_articles else 0.0,
        pct_articles_with_images=100.0 * with_images / n_articles if n_articles else 0.0,
    )


def bucket_by_length(
    corpus: AlignedCorpus,
    pivot_language: str,
    boundaries: tuple[int, int] = (15, 25),
) -> dict[str, list[int]]:
    """Partition line positions into short/medium/long by pivot word count.

    short: <= boundaries[0] words; long: > boundaries[1]; medium between.
    Line positions index the flattened record list of the pivot language.
    """
    if pivot_language not in corpus.sentences:
        raise UnknownLanguage(f"pivot {pivot_language!r} not in corpus")
    low, high = boundaries
    if not (
        isinstance(low, int) and isinstance(high, int) and 0 < low < high
    ):
        raise InvalidBoundaries(f"boundaries must be increasing positive ints: {boundaries}")
    buckets: dict[str, list[int]] = {"short": [], "medium": [], "long": []}
    for position, record in enumerate(corpus.sentences[pivot_language]):
        n = word_count(record.text)
        if n <= low:
            buckets["short"].append(position)
        elif n <= high:
            buckets["medium"].append(position)
        else:
            buckets["long"].append(position)
    return buckets


def reorder_lines(corpus: AlignedCorpus, order: Sequence[int]) -> AlignedCorpus:
    """Uniform line reordering across all languages (stats invariance helper)."""
    if sorted(order) != list(range(corpus.n_lines())):
        raise MisalignedCorpus("order is not a permutation of line positions")
    sentences = {
        lang: [records[i] for i in order]
        for lang, records in corpus.sentences.items()
    }
    return AlignedCorpus(languages=corpus.languages, sentences=sentences)
