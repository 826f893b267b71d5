"""BLEU-family scoring and the rank statistics used to validate metrics.

Three tokenization modes share one scorer: word BLEU (whitespace split with
punctuation detached), char-BLEU (unicode scalar values as tokens), and
spBLEU (tokens produced by a shared subword model, so scores are comparable
across languages without per-language tokenizers).  Corpus-level scores sum
match/total counts over all segments before taking ratios; sentence-level
scores optionally smooth zero-match higher orders.

Every score carries a signature string recording the tokenization mode,
smoothing and max order, so two scores are comparable only when their
signatures agree.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Sequence

from . import __version__
from .errors import DomainError

MAX_ORDER = 4

Tokens = Sequence[Hashable]


class LengthMismatch(DomainError):
    pass


class EmptyInput(DomainError):
    pass


class EmptyReference(DomainError):
    pass


class TooFew(DomainError):
    pass


@dataclass(frozen=True)
class BleuScore:
    """One BLEU measurement.

    precisions holds the raw clipped (match, total) pair per n-gram order;
    smoothing never rewrites these counts, it only affects the score.
    brevity_penalty is 1.0 when the hypothesis is at least as long as the
    reference, exp(1 - ref_len/hyp_len) when shorter, and 0.0 for the
    degenerate empty hypothesis.
    """

    score: float
    precisions: tuple[tuple[int, int], ...]
    brevity_penalty: float
    hyp_length: int
    ref_length: int
    signature: str

    def precision(self, order: int) -> float:
        match, total = self.precisions[order - 1]
        return match / total if total else 0.0

    def format(self, width: int = 2) -> str:
        return f"{self.score:.{width}f}"

    def as_dict(self) -> dict:
        return {
            "score": self.score,
            "precisions": [list(p) for p in self.precisions],
            "brevity_penalty": self.brevity_penalty,
            "hyp_length": self.hyp_length,
            "ref_length": self.ref_length,
            "signature": self.signature,
        }


def signature(tok: str, smoothing: str, max_order: int) -> str:
    return f"tok.{tok}+smooth.{smoothing}+order.{max_order}+v.{__version__}"


def extract_ngrams(tokens: Tokens, max_order: int = MAX_ORDER) -> Counter:
    """Count all n-grams of order 1..max_order as tuples."""
    ngrams: Counter = Counter()
    for n in range(1, max_order + 1):
        for i in range(len(tokens) - n + 1):
            ngrams[tuple(tokens[i : i + n])] += 1
    return ngrams


def tokenize_words(text: str) -> list[str]:
    """Whitespace tokenization with every punctuation scalar detached."""
    parts: list[str] = []
    for ch in text:
        if unicodedata.category(ch).startswith("P"):
            parts.append(f" {ch} ")
        else:
            parts.append(ch)
    return "".join(parts).split()


def _accumulate(
    hypothesis: Tokens,
    reference: Tokens,
    correct: list[int],
    total: list[int],
    max_order: int,
) -> None:
    hyp_ngrams = extract_ngrams(hypothesis, max_order)
    ref_ngrams = extract_ngrams(reference, max_order)
    for ngram, count in hyp_ngrams.items():
        order = len(ngram)
        total[order - 1] += count
        # clipped: a hypothesis n-gram can match at most as often as it
        # appears in the reference
        correct[order - 1] += min(count, ref_ngrams.get(ngram, 0))


def _score_counts(
    correct: list[int],
    total: list[int],
    hyp_length: int,
    ref_length: int,
    max_order: int,
    smoothing: str,
    sig: str,
) -> BleuScore:
    precisions = tuple((correct[n], total[n]) for n in range(max_order))
    if hyp_length == 0:
        return BleuScore(0.0, precisions, 0.0, hyp_length, ref_length, sig)

    if hyp_length > ref_length:
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_length / hyp_length)

    log_sum = 0.0
    for n in range(max_order):
        match, tot = correct[n], total[n]
        if tot == 0:
            # the hypothesis is too short to form this order at all: no
            # evidence, factor 1, so identity still scores exactly 100
            continue
        if smoothing == "add1" and n >= 1 and match == 0:
            # orders >= 2 only; order 1 with zero matches stays a hard zero
            match, tot = match + 1, tot + 1
        if match == 0:
            return BleuScore(0.0, precisions, bp, hyp_length, ref_length, sig)
        log_sum += math.log(match / tot)

    score = 100.0 * bp * math.exp(log_sum / max_order)
    return BleuScore(score, precisions, bp, hyp_length, ref_length, sig)


def corpus_bleu(
    hypotheses: Sequence[Tokens],
    references: Sequence[Tokens],
    max_order: int = MAX_ORDER,
    tok_label: str = "pretok",
) -> BleuScore:
    """Corpus BLEU over pre-tokenized segments, no smoothing.

    Match and total counts are summed over all segment pairs before any
    ratio is taken, so the result is not an average of sentence scores.
    """
    if len(hypotheses) != len(references):
        raise LengthMismatch(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    if not hypotheses:
        raise EmptyInput("no segments to score")
    correct = [0] * max_order
    total = [0] * max_order
    hyp_length = 0
    ref_length = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_length += len(hyp)
        ref_length += len(ref)
        _accumulate(hyp, ref, correct, total, max_order)
    sig = signature(tok_label, "none", max_order)
    return _score_counts(
        correct, total, hyp_length, ref_length, max_order, "none", sig
    )


def sentence_bleu(
    hypothesis: Tokens,
    reference: Tokens,
    smoothing: str = "add1",
    max_order: int = MAX_ORDER,
    tok_label: str = "pretok",
) -> BleuScore:
    """Sentence BLEU with optional add-one smoothing.

    With smoothing "add1", any order >= 2 with zero matches contributes
    (matches+1)/(total+1) to the geometric mean; order 1 is never smoothed,
    so a hypothesis sharing no tokens with the reference still scores 0.
    With smoothing "none" this equals corpus_bleu on the singleton lists.
    """
    if smoothing not in ("none", "add1"):
        raise ValueError(f"unknown smoothing {smoothing!r}")
    if len(reference) == 0:
        raise EmptyReference("reference is empty")
    correct = [0] * max_order
    total = [0] * max_order
    _accumulate(hypothesis, reference, correct, total, max_order)
    sig = signature(tok_label, smoothing, max_order)
    return _score_counts(
        correct, total, len(hypothesis), len(reference), max_order, smoothing, sig
    )


def _as_lines(text: str | Sequence[str]) -> list[str]:
    if isinstance(text, str):
        return [text]
    return list(text)


def word_bleu(
    hypothesis: str | Sequence[str],
    reference: str | Sequence[str],
    level: str = "corpus",
) -> BleuScore:
    """Plain word BLEU over raw text, using tokenize_words."""
    return _text_bleu(hypothesis, reference, level, tokenize_words, "word")


def char_bleu(
    hypothesis: str | Sequence[str],
    reference: str | Sequence[str],
    level: str = "corpus",
) -> BleuScore:
    """BLEU over unicode scalar values; whitespace kept as characters."""
    return _text_bleu(hypothesis, reference, level, list, "char")


def _text_bleu(hypothesis, reference, level, tokenize, tok_label) -> BleuScore:
    hyp_lines = _as_lines(hypothesis)
    ref_lines = _as_lines(reference)
    if level == "sentence":
        if len(hyp_lines) != 1 or len(ref_lines) != 1:
            raise LengthMismatch("sentence level takes exactly one segment")
        ref_tokens = tokenize(ref_lines[0])
        if not ref_tokens:
            raise EmptyReference("reference is empty")
        return sentence_bleu(
            tokenize(hyp_lines[0]), ref_tokens, "add1", tok_label=tok_label
        )
    if level == "corpus":
        return corpus_bleu(
            [tokenize(h) for h in hyp_lines],
            [tokenize(r) for r in ref_lines],
            tok_label=tok_label,
        )
    raise ValueError(f"unknown level {level!r}")


def sp_bleu(
    model,
    hypothesis: str | Sequence[str],
    reference: str | Sequence[str],
    level: str = "corpus",
) -> BleuScore:
    """BLEU in subword space: encode with the shared model, then BLEU.

    Exactly equivalent to corpus_bleu (or sentence_bleu) applied to
    encode(model, line) for every line; the signature records the model
    identity so scores under different vocabularies never compare equal.
    """
    from .tokenizer import encode

    hyp_lines = _as_lines(hypothesis)
    ref_lines = _as_lines(reference)
    tok_label = f"sp.{model.tag()}"
    if level == "sentence":
        if len(hyp_lines) != 1 or len(ref_lines) != 1:
            raise LengthMismatch("sentence level takes exactly one segment")
        ref_ids = encode(model, ref_lines[0])
        if not ref_ids:
            raise EmptyReference("reference encodes to no pieces")
        return sentence_bleu(
            encode(model, hyp_lines[0]), ref_ids, "add1", tok_label=tok_label
        )
    if level == "corpus":
        return corpus_bleu(
            [encode(model, h) for h in hyp_lines],
            [encode(model, r) for r in ref_lines],
            tok_label=tok_label,
        )
    raise ValueError(f"unknown level {level!r}")


def _check_pair(scores_a: Sequence[float], scores_b: Sequence[float]) -> None:
    if len(scores_a) != len(scores_b):
        raise LengthMismatch(f"{len(scores_a)} vs {len(scores_b)} scores")
    if len(scores_a) < 2:
        raise TooFew("need at least two systems to rank")


def kendall_tau(scores_a: Sequence[float], scores_b: Sequence[float]) -> float:
    """Kendall tau-b: concordant minus discordant pairs, tie-corrected.

    Returns 0.0 when either vector is constant (no ranking information).
    """
    _check_pair(scores_a, scores_b)
    n = len(scores_a)
    concordant = 0
    discordant = 0
    for i in range(n):
        for j in range(i + 1, n):
            da = scores_a[i] - scores_a[j]
            db = scores_b[i] - scores_b[j]
            prod = da * db
            if prod > 0:
                concordant += 1
            elif prod < 0:
                discordant += 1
    n0 = n * (n - 1) // 2
    ties_a = sum(c * (c - 1) // 2 for c in Counter(scores_a).values())
    ties_b = sum(c * (c - 1) // 2 for c in Counter(scores_b).values())
    denom = math.sqrt((n0 - ties_a) * (n0 - ties_b))
    if denom == 0:
        return 0.0
    return (concordant - discordant) / denom


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks; tied values share the mean of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def _pearson(x: Sequence[float], y: Sequence[float]) -> float:
    n = len(x)
    mean_x = math.fsum(x) / n
    mean_y = math.fsum(y) / n
    cov = math.fsum((a - mean_x) * (b - mean_y) for a, b in zip(x, y))
    var_x = math.fsum((a - mean_x) ** 2 for a in x)
    var_y = math.fsum((b - mean_y) ** 2 for b in y)
    denom = math.sqrt(var_x * var_y)
    if denom == 0:
        return 0.0
    return cov / denom


def spearman(scores_a: Sequence[float], scores_b: Sequence[float]) -> float:
    """Spearman rho: Pearson correlation of average ranks."""
    _check_pair(scores_a, scores_b)
    return _pearson(average_ranks(scores_a), average_ranks(scores_b))


def same_best_model(
    scores_a: Sequence[float], scores_b: Sequence[float]
) -> bool:
    """True iff both vectors put their maximum at the same index.

    Ties are broken toward the lowest index in both vectors.
    """
    if len(scores_a) != len(scores_b):
        raise LengthMismatch(f"{len(scores_a)} vs {len(scores_b)} scores")
    if not scores_a:
        raise EmptyInput("no scores")
    best_a = max(range(len(scores_a)), key=lambda i: (scores_a[i], -i))
    best_b = max(range(len(scores_b)), key=lambda i: (scores_b[i], -i))
    return best_a == best_b


@dataclass(frozen=True)
class RankComparison:
    tau: float
    rho: float
    same_best: bool
    n_systems: int


def compare_rankings(
    scores_a: Sequence[float], scores_b: Sequence[float]
) -> RankComparison:
    """All three rank statistics for one pair of score vectors."""
    return RankComparison(
        tau=kendall_tau(scores_a, scores_b),
        rho=spearman(scores_a, scores_b),
        same_best=same_best_model(scores_a, scores_b),
        n_systems=len(scores_a),
    )
