"""Automatic translation-quality checks and the corpus-level gate.

Five per-sentence checks: language identification, source copying, length
ratio, fluency under a character language model, and the engine-copy
heuristic (sentence spBLEU against one or two machine engines).  A batch
fails the corpus gate when strictly more than the configured fraction of
sentences trips the engine-copy check; that batch goes back for
re-translation.

All thresholds live in CheckConfig.  The engine-copy constants (50, 20)
and the 10% gate follow the published heuristic with strict inequalities;
the remaining defaults are pinned here because the checks are published
without parameters.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .errors import DomainError
from .metrics import sp_bleu
from .tokenizer import SubwordModel


class MissingEngineOutput(DomainError):
    pass


class EmptyInput(DomainError):
    pass


class EmptySource(DomainError):
    pass


class UntrainedModel(DomainError):
    pass


class UnknownLanguage(DomainError):
    pass


class OutOfRange(DomainError):
    pass


class LengthMismatch(DomainError):
    pass


@dataclass(frozen=True)
class CheckConfig:
    copy_threshold: float = 50.0
    margin_threshold: float = 20.0
    corpus_gate_fraction: float = 0.10
    length_ratio_bounds: tuple[float, float] = (0.5, 2.0)
    source_copy_similarity: float = 0.9
    fluency_z_max: float = 3.0
    langid_margin: float = 0.05
    langid_min_chars: int = 20

    def __post_init__(self) -> None:
        if self.copy_threshold <= 0:
            raise ValueError("copy_threshold must be positive")
        if not 0 < self.corpus_gate_fraction < 1:
            raise ValueError("corpus_gate_fraction must be in (0, 1)")
        if self.length_ratio_bounds[0] >= self.length_ratio_bounds[1]:
            raise ValueError("length_ratio_bounds must be ordered")


@dataclass(frozen=True)
class EngineCopyResult:
    flagged: bool
    x_vs_a: float
    x_vs_b: float | None


def _sentence_spbleu(model: SubwordModel, hyp: str, ref: str) -> float:
    if not ref.strip():
        return 0.0
    return sp_bleu(model, hyp, ref, level="sentence").score


def check_engine_copy(
    x: str,
    y_a: str | None,
    y_b: str | None,
    model: SubwordModel,
    cfg: CheckConfig,
    symmetric: bool = True,
) -> EngineCopyResult:
    """Flag a professional translation x that looks like an engine copy.

    With both engines: flag iff spBLEU(x, y_a) - spBLEU(x, y_b) > 20 and
    spBLEU(x, y_a) > 50 (strict).  With one engine: flag iff
    spBLEU(x, y_a) > 50.  symmetric=True additionally applies the rule
    with the engine roles swapped and flags if either direction fires;
    symmetric=False is the literal one-direction rule.
    """
    if y_a is None:
        raise MissingEngineOutput("engine A output required")
    score_a = _sentence_spbleu(model, x, y_a)
    if y_b is None:
        return EngineCopyResult(score_a > cfg.copy_threshold, score_a, None)
    score_b = _sentence_spbleu(model, x, y_b)
    flagged = score_a > cfg.copy_threshold and score_a - score_b > cfg.margin_threshold
    if symmetric:
        flagged = flagged or (
            score_b > cfg.copy_threshold
            and score_b - score_a > cfg.margin_threshold
        )
    return EngineCopyResult(flagged, score_a, score_b)


def copy_rule(
    score_a: float, score_b: float | None, cfg: CheckConfig, symmetric: bool = True
) -> bool:
    """The threshold rule alone, for callers that already hold the scores."""
    if score_b is None:
        return score_a > cfg.copy_threshold
    flagged = score_a > cfg.copy_threshold and score_a - score_b > cfg.margin_threshold
    if symmetric:
        flagged = flagged or (
            score_b > cfg.copy_threshold
            and score_b - score_a > cfg.margin_threshold
        )
    return flagged


def corpus_gate(flags: Sequence[bool], cfg: CheckConfig) -> str:
    """"pass" or "retranslate": strictly more than the configured fraction
    of flagged sentences sends the whole batch back."""
    if not flags:
        raise EmptyInput("no sentences")
    fraction = sum(bool(f) for f in flags) / len(flags)
    return "retranslate" if fraction > cfg.corpus_gate_fraction else "pass"


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ch_a in enumerate(a, start=1):
        current = [i]
        for j, ch_b in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (ch_a != ch_b),
                )
            )
        previous = current
    return previous[-1]


def edit_similarity(a: str, b: str) -> float:
    """1 - levenshtein/max-length on NFKC-normalized text; 1.0 for two
    empty strings."""
    a = unicodedata.normalize("NFKC", a)
    b = unicodedata.normalize("NFKC", b)
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def check_source_copy(source: str, hypothesis: str, cfg: CheckConfig) -> bool:
    """Flag iff edit similarity >= the configured threshold (0.9)."""
    return edit_similarity(source, hypothesis) >= cfg.source_copy_similarity


def check_length_ratio(source: str, hypothesis: str, cfg: CheckConfig) -> bool:
    """Flag iff the char-length ratio hyp/src leaves the closed interval."""
    if len(source) == 0:
        raise EmptySource("source sentence is empty")
    ratio = len(hypothesis) / len(source)
    low, high = cfg.length_ratio_bounds
    return ratio < low or ratio > high


BOS = "\x02"


@dataclass
class CharLm:
    """Add-one-smoothed character n-gram model with calibration stats.

    calibration_mean/std summarize per-character NLL over the training
    lines, so the fluency check can flag outliers in z-score terms.
    """

    order: int = 5
    context_counts: dict[str, int] = field(default_factory=dict)
    ngram_counts: dict[str, int] = field(default_factory=dict)
    charset_size: int = 0
    calibration_mean: float = 0.0
    calibration_std: float = 0.0


def train_char_lm(lines: Sequence[str], order: int = 5) -> CharLm:
    lm = CharLm(order=order)
    charset: set[str] = set()
    for line in lines:
        charset.update(line)
        padded = BOS * (order - 1) + line
        for i in range(order - 1, len(padded)):
            context = padded[i - order + 1 : i]
            lm.context_counts[context] = lm.context_counts.get(context, 0) + 1
            gram = context + padded[i]
            lm.ngram_counts[gram] = lm.ngram_counts.get(gram, 0) + 1
    # one extra slot so unseen characters keep positive probability
    lm.charset_size = len(charset) + 1
    nlls = [per_char_nll(lm, line) for line in lines if line]
    if nlls:
        lm.calibration_mean = sum(nlls) / len(nlls)
        variance = sum((x - lm.calibration_mean) ** 2 for x in nlls) / len(nlls)
        lm.calibration_std = math.sqrt(variance)
    return lm


def per_char_nll(lm: CharLm, text: str) -> float:
    if not lm.context_counts:
        raise UntrainedModel("character LM has no counts")
    if not text:
        raise EmptyInput("empty text has no likelihood")
    padded = BOS * (lm.order - 1) + text
    total = 0.0
    for i in range(lm.order - 1, len(padded)):
        context = padded[i - lm.order + 1 : i]
        gram = context + padded[i]
        numerator = lm.ngram_counts.get(gram, 0) + 1
        denominator = lm.context_counts.get(context, 0) + lm.charset_size
        total += -math.log(numerator / denominator)
    return total / len(text)


def check_fluency(lm: CharLm, hypothesis: str, cfg: CheckConfig) -> bool:
    """Flag iff per-char NLL exceeds calibration mean + z_max * std.

    An empty hypothesis is flagged outright as degenerate.
    """
    if not lm.context_counts:
        raise UntrainedModel("character LM has no counts")
    if not hypothesis:
        return True
    nll = per_char_nll(lm, hypothesis)
    return nll > lm.calibration_mean + cfg.fluency_z_max * lm.calibration_std


N_PROFILE_TRIGRAMS = 1000


@dataclass(frozen=True)
class LangProfileSet:
    """Per-language top-1000 character-trigram frequency profiles."""

    profiles: dict[str, dict[str, float]]

    def languages(self) -> list[str]:
        return sorted(self.profiles)


def build_profiles(training_text: dict[str, Sequence[str]]) -> LangProfileSet:
    profiles: dict[str, dict[str, float]] = {}
    for lang in sorted(training_text):
        counts: Counter = Counter()
        for line in training_text[lang]:
            for i in range(len(line) - 2):
                counts[line[i : i + 3]] += 1
        top = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        top = top[:N_PROFILE_TRIGRAMS]
        norm = math.sqrt(sum(c * c for _, c in top))
        profiles[lang] = {g: c / norm for g, c in top} if norm else {}
    return LangProfileSet(profiles=profiles)


def _profile_similarity(profile: dict[str, float], text: str) -> float:
    counts: Counter = Counter()
    for i in range(len(text) - 2):
        counts[text[i : i + 3]] += 1
    norm = math.sqrt(sum(c * c for c in counts.values()))
    if norm == 0:
        return 0.0
    return sum(profile.get(g, 0.0) * c for g, c in counts.items()) / norm


def identify_language(profiles: LangProfileSet, text: str) -> tuple[str, dict[str, float]]:
    similarities = {
        lang: _profile_similarity(profile, text)
        for lang, profile in profiles.profiles.items()
    }
    predicted = max(sorted(similarities), key=lambda lang: similarities[lang])
    return predicted, similarities


def check_language_id(
    profiles: LangProfileSet, hypothesis: str, expected: str, cfg: CheckConfig
) -> bool:
    """Flag iff another language's profile wins by more than the margin.

    Skipped (never flags) below the minimum length; trigram cosine over
    raw text is too noisy on very short strings.
    """
    if expected not in profiles.profiles:
        raise UnknownLanguage(f"no profile for {expected!r}")
    if len(hypothesis) < cfg.langid_min_chars:
        return False
    predicted, similarities = identify_language(profiles, hypothesis)
    if predicted == expected:
        return False
    return similarities[predicted] - similarities[expected] > cfg.langid_margin


def score_histogram(
    sentence_scores: Sequence[float], bucket_width: int = 10
) -> list[int]:
    """Counts per score bucket [0,10), ..., [90,100]; 100.0 lands in the
    top bucket."""
    if 100 % bucket_width != 0:
        raise ValueError("bucket_width must divide 100")
    n_buckets = 100 // bucket_width
    counts = [0] * n_buckets
    for score in sentence_scores:
        if not 0 <= score <= 100:
            raise OutOfRange(f"score {score} outside [0, 100]")
        counts[min(int(score // bucket_width), n_buckets - 1)] += 1
    return counts


@dataclass(frozen=True)
class SentenceFlags:
    langid_fail: bool = False
    source_copy: bool = False
    length_outlier: bool = False
    disfluent: bool = False
    engine_copy: bool = False
    x_vs_a: float | None = None
    x_vs_b: float | None = None

    def as_row(self) -> dict:
        return {
            "langid_fail": self.langid_fail,
            "source_copy": self.source_copy,
            "length_outlier": self.length_outlier,
            "disfluent": self.disfluent,
            "engine_copy": self.engine_copy,
            "x_vs_a": self.x_vs_a,
            "x_vs_b": self.x_vs_b,
        }


@dataclass(frozen=True)
class QaReport:
    flags: list[SentenceFlags]
    verdict: str
    flagged_fraction: float
    checks_run: tuple[str, ...]

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "flagged_fraction": self.flagged_fraction,
            "checks_run": list(self.checks_run),
            "n_sentences": len(self.flags),
        }


def run_checks(
    source_lines: Sequence[str],
    hyp_lines: Sequence[str],
    engine_a_lines: Sequence[str] | None = None,
    engine_b_lines: Sequence[str] | None = None,
    model: SubwordModel | None = None,
    cfg: CheckConfig | None = None,
    lm: CharLm | None = None,
    profiles: LangProfileSet | None = None,
    expected_language: str | None = None,
    symmetric: bool = True,
) -> QaReport:
    """Run every check whose inputs were supplied, sentence by sentence.

    The corpus verdict is driven by the engine-copy flags alone, matching
    the published gate; the other flags are advisory per-sentence output.
    """
    cfg = cfg or CheckConfig()
    n = len(source_lines)
    for name, lines in (
        ("hypothesis", hyp_lines),
        ("engine A", engine_a_lines),
        ("engine B", engine_b_lines),
    ):
        if lines is not None and len(lines) != n:
            raise LengthMismatch(
                f"{name} has {len(lines)} lines, source has {n}"
            )
    if n == 0:
        raise EmptyInput("no sentences")

    checks_run = ["source_copy", "length_ratio"]
    run_engine = engine_a_lines is not None and model is not None
    if run_engine:
        checks_run.append("engine_copy")
    if lm is not None:
        checks_run.append("fluency")
    if profiles is not None and expected_language is not None:
        checks_run.append("language_id")

    flags: list[SentenceFlags] = []
    for i in range(n):
        src, hyp = source_lines[i], hyp_lines[i]
        engine = EngineCopyResult(False, 0.0, None)
        if run_engine:
            engine = check_engine_copy(
                hyp,
                engine_a_lines[i],
                engine_b_lines[i] if engine_b_lines is not None else None,
                model,
                cfg,
                symmetric=symmetric,
            )
        flags.append(
            SentenceFlags(
                langid_fail=(
                    check_language_id(profiles, hyp, expected_language, cfg)
                    if "language_id" in checks_run
                    else False
                ),
                source_copy=check_source_copy(src, hyp, cfg),
                length_outlier=(
                    check_length_ratio(src, hyp, cfg) if src else False
                ),
                disfluent=(
                    check_fluency(lm, hyp, cfg) if lm is not None else False
                ),
                engine_copy=engine.flagged,
                x_vs_a=engine.x_vs_a if run_engine else None,
                x_vs_b=engine.x_vs_b,
            )
        )
    engine_flags = [f.engine_copy for f in flags]
    fraction = sum(engine_flags) / n
    verdict = corpus_gate(engine_flags, cfg) if run_engine else "pass"
    return QaReport(
        flags=flags,
        verdict=verdict,
        flagged_fraction=fraction,
        checks_run=tuple(checks_run),
    )
