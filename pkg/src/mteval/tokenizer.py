"""Language-agnostic unigram subword model: training, encoding, decoding.

The model is a vocabulary of pieces with log-probabilities.  Text is
normalized (NFKC), spaces are replaced by a meta symbol that marks word
starts, and encoding picks the maximum-log-probability segmentation by
Viterbi search.  Characters no piece covers fall back to 256 byte pieces,
so encoding is total over arbitrary unicode input.

Training follows the standard unigram-LM recipe: seed the vocabulary with
frequent substrings of a temperature-resampled sentence sample, run EM to
fit piece probabilities, and iteratively prune the pieces whose removal
costs the least likelihood until the requested size is reached.

Round-trip guarantee: decode(encode(s)) == s for any s that is already in
NFKC form and does not contain the meta symbol character itself (decode
maps every meta symbol back to a space).  Other input round-trips to its
normalized form.
"""

from __future__ import annotations

import hashlib
import math
import random
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DomainError

META_SYMBOL = "▁"
NORMALIZATION = "nfkc"
N_BYTE_PIECES = 256
# score of one byte-fallback token; low enough that trained pieces are
# preferred whenever their probability is better than chance at this floor
BYTE_SCORE = -20.0

SEED_PIECE_MAX_LEN = 8
SEED_PIECE_MIN_COUNT = 2
SEED_CAP_MULTIPLIER = 20
EM_ITERS_PER_ROUND = 2
PRUNE_FRACTION = 0.2
CHAR_COVERAGE = 0.9995
DEFAULT_TEMPERATURE = 5.0


class AllEmpty(DomainError):
    pass


class NonpositiveTemperature(DomainError):
    pass


class VocabTooSmall(DomainError):
    pass


class EmptyCorpus(DomainError):
    pass


class CorpusTooSmall(DomainError):
    pass


class UnknownPieceId(DomainError):
    pass


class ModelFormatError(DomainError):
    pass


@dataclass(frozen=True)
class SamplingPlan:
    """Per-corpus sampling weights after temperature flattening."""

    weights: tuple[float, ...]
    temperature: float
    sizes: tuple[int, ...]


def temperature_resample(sizes: Sequence[int], temperature: float) -> SamplingPlan:
    """Flatten corpus-size proportions: q_i proportional to (n_i/sum)^(1/T).

    T = 1 reproduces the raw proportions; larger T moves weight toward the
    smaller corpora so low-resource languages contribute more piece mass.
    """
    if temperature <= 0:
        raise NonpositiveTemperature(f"temperature must be > 0, got {temperature}")
    total = sum(sizes)
    if total <= 0:
        raise AllEmpty("all corpora are empty")
    raised = [(n / total) ** (1.0 / temperature) for n in sizes]
    norm = sum(raised)
    weights = tuple(w / norm for w in raised)
    return SamplingPlan(weights=weights, temperature=temperature, sizes=tuple(sizes))


class SubwordModel:
    """Immutable piece table plus the derived id and lookup structures.

    Ids 0..len(pieces)-1 are real pieces ordered by (descending
    log-probability, piece); ids len(pieces)..len(pieces)+255 are the byte
    fallback pieces.
    """

    def __init__(
        self,
        pieces: dict[str, float],
        meta_symbol: str = META_SYMBOL,
        normalization_tag: str = NORMALIZATION,
        seed: int = 0,
    ) -> None:
        if not pieces:
            raise ValueError("a model needs at least one piece")
        for piece, logprob in pieces.items():
            if not piece:
                raise ValueError("empty piece")
            if not math.isfinite(logprob) or logprob > 0:
                raise ValueError(f"piece {piece!r} has invalid log-prob {logprob}")
        ordered = sorted(pieces.items(), key=lambda kv: (-kv[1], kv[0]))
        self.pieces: dict[str, float] = dict(ordered)
        self.meta_symbol = meta_symbol
        self.normalization_tag = normalization_tag
        self.seed = seed
        self._id_to_piece: list[str] = [p for p, _ in ordered]
        self._piece_to_id: dict[str, int] = {
            p: i for i, p in enumerate(self._id_to_piece)
        }
        self._max_piece_len = max(len(p) for p in self._id_to_piece)

    @property
    def vocab_size(self) -> int:
        return len(self.pieces) + N_BYTE_PIECES

    def piece_id(self, piece: str) -> int | None:
        return self._piece_to_id.get(piece)

    def byte_id(self, byte: int) -> int:
        return len(self.pieces) + byte

    def serialize(self) -> str:
        lines = [
            "subword-unigram v1",
            f"vocab_size={self.vocab_size}",
            f"meta_symbol={self.meta_symbol}",
            f"normalization={self.normalization_tag}",
            f"seed={self.seed}",
        ]
        for piece in self._id_to_piece:
            # pieces never contain tabs or newlines (enforced at training)
            lines.append(f"{piece}\t{self.pieces[piece]!r}")
        return "\n".join(lines) + "\n"

    def tag(self) -> str:
        """Short content hash identifying this exact model."""
        digest = hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()
        return digest[:10]


def save_model(model: SubwordModel, path: str | Path) -> None:
    Path(path).write_text(model.serialize(), encoding="utf-8", newline="\n")


def load_model(path: str | Path) -> SubwordModel:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if not lines or lines[0] != "subword-unigram v1":
        raise ModelFormatError(f"{path}: not a subword model file")
    header: dict[str, str] = {}
    body_start = 1
    for i in range(1, len(lines)):
        if "=" in lines[i] and "\t" not in lines[i]:
            key, _, value = lines[i].partition("=")
            header[key] = value
            body_start = i + 1
        else:
            break
    for key in ("vocab_size", "meta_symbol", "normalization", "seed"):
        if key not in header:
            raise ModelFormatError(f"{path}: missing header field {key}")
    pieces: dict[str, float] = {}
    for line in lines[body_start:]:
        if not line:
            continue
        piece, sep, logprob = line.partition("\t")
        if not sep:
            raise ModelFormatError(f"{path}: malformed piece line {line!r}")
        pieces[piece] = float(logprob)
    model = SubwordModel(
        pieces,
        meta_symbol=header["meta_symbol"],
        normalization_tag=header["normalization"],
        seed=int(header["seed"]),
    )
    if model.vocab_size != int(header["vocab_size"]):
        raise ModelFormatError(
            f"{path}: header vocab_size {header['vocab_size']} "
            f"but file holds {model.vocab_size}"
        )
    return model


def _normalize(model: SubwordModel, text: str) -> str:
    if model.normalization_tag != NORMALIZATION:
        raise ModelFormatError(
            f"unsupported normalization {model.normalization_tag!r}"
        )
    return unicodedata.normalize("NFKC", text)


def _to_internal(model: SubwordModel, text: str) -> str:
    """Meta-symbol form: one prefix marking the first word start, every
    space replaced so pieces can span word boundaries."""
    return (model.meta_symbol + text).replace(" ", model.meta_symbol)


def encode(model: SubwordModel, text: str) -> list[int]:
    """Viterbi maximum-log-probability segmentation, as piece ids.

    Total over arbitrary input: characters outside the piece table are
    emitted as their UTF-8 bytes via the byte-fallback pieces.
    """
    if text == "":
        return []
    internal = _to_internal(model, _normalize(model, text))
    n = len(internal)
    max_len = model._max_piece_len
    neg_inf = float("-inf")
    best = [neg_inf] * (n + 1)
    best[0] = 0.0
    # back[i] = (start, piece id or None for byte fallback of internal[i-1])
    back: list[tuple[int, int | None]] = [(0, None)] * (n + 1)
    for end in range(1, n + 1):
        for start in range(max(0, end - max_len), end):
            if best[start] == neg_inf:
                continue
            piece = internal[start:end]
            logprob = model.pieces.get(piece)
            if logprob is not None:
                cand = best[start] + logprob
                if cand > best[end]:
                    best[end] = cand
                    back[end] = (start, model._piece_to_id[piece])
        start = end - 1
        if best[start] > neg_inf:
            cand = best[start] + BYTE_SCORE * len(internal[start].encode("utf-8"))
            if cand > best[end]:
                best[end] = cand
                back[end] = (start, None)
    ids: list[int] = []
    pos = n
    while pos > 0:
        start, piece_id = back[pos]
        if piece_id is None:
            char_bytes = internal[start].encode("utf-8")
            ids[:0] = [model.byte_id(b) for b in char_bytes]
        else:
            ids.insert(0, piece_id)
        pos = start
    return ids


def decode(model: SubwordModel, ids: Sequence[int]) -> str:
    """Inverse of encode on its image: byte runs are reassembled as UTF-8,
    meta symbols become spaces, and the encode-time prefix is stripped."""
    n_pieces = len(model.pieces)
    chunks: list[str] = []
    byte_run = bytearray()
    for piece_id in ids:
        if 0 <= piece_id < n_pieces:
            if byte_run:
                chunks.append(byte_run.decode("utf-8", errors="replace"))
                byte_run = bytearray()
            chunks.append(model._id_to_piece[piece_id])
        elif n_pieces <= piece_id < n_pieces + N_BYTE_PIECES:
            byte_run.append(piece_id - n_pieces)
        else:
            raise UnknownPieceId(f"id {piece_id} outside vocabulary")
    if byte_run:
        chunks.append(byte_run.decode("utf-8", errors="replace"))
    text = "".join(chunks).replace(model.meta_symbol, " ")
    if text.startswith(" "):
        text = text[1:]
    return text


def id_to_piece(model: SubwordModel, piece_id: int) -> str:
    """Printable piece for an id; byte-fallback ids render as <0xNN>."""
    n_pieces = len(model.pieces)
    if 0 <= piece_id < n_pieces:
        return model._id_to_piece[piece_id]
    if n_pieces <= piece_id < n_pieces + N_BYTE_PIECES:
        return f"<0x{piece_id - n_pieces:02X}>"
    raise UnknownPieceId(f"id {piece_id} outside vocabulary")


def sequence_logprob(model: SubwordModel, ids: Sequence[int]) -> float:
    """Log-probability of a piece id sequence under the unigram model."""
    n_pieces = len(model.pieces)
    total = 0.0
    for piece_id in ids:
        if 0 <= piece_id < n_pieces:
            total += model.pieces[model._id_to_piece[piece_id]]
        elif n_pieces <= piece_id < n_pieces + N_BYTE_PIECES:
            total += BYTE_SCORE
        else:
            raise UnknownPieceId(f"id {piece_id} outside vocabulary")
    return total


# ---------------------------------------------------------------------------
# training


def _sample_sentences(
    corpora: list[list[str]],
    plan: SamplingPlan,
    budget: int,
    rng: random.Random,
) -> list[tuple[str, int, int]]:
    """Sample with replacement by corpus weight, then uniformly within the
    corpus.  Returns unique (internal text, multiplicity, corpus index)."""
    counts: dict[tuple[str, int], int] = {}
    indices = [i for i in range(len(corpora)) if corpora[i] and plan.weights[i] > 0]
    if not indices:
        raise EmptyCorpus("no corpus has both sentences and positive weight")
    weights = [plan.weights[i] for i in indices]
    for pick in rng.choices(indices, weights=weights, k=budget):
        sentence = corpora[pick][rng.randrange(len(corpora[pick]))]
        key = (sentence, pick)
        counts[key] = counts.get(key, 0) + 1
    return [(s, m, c) for (s, c), m in sorted(counts.items())]


def _covered_chars(samples: list[tuple[str, int, int]]) -> set[str]:
    freq: dict[str, int] = {}
    total = 0
    for text, mult, _ in samples:
        for ch in text:
            freq[ch] = freq.get(ch, 0) + mult
            total += mult
    covered: set[str] = set()
    mass = 0
    for ch, count in sorted(freq.items(), key=lambda kv: (-kv[1], kv[0])):
        if mass >= total * CHAR_COVERAGE:
            break
        covered.add(ch)
        mass += count
    return covered


def _segments(text: str, covered: set[str]) -> list[str]:
    """Split out maximal runs of covered, non-control characters; anything
    else is left to byte fallback and never enters a piece."""
    runs: list[str] = []
    current: list[str] = []
    for ch in text:
        if ch in covered and unicodedata.category(ch) != "Cc":
            current.append(ch)
        elif current:
            runs.append("".join(current))
            current = []
    if current:
        runs.append("".join(current))
    return runs


def _seed_candidates(
    samples: list[tuple[str, int, int]], covered: set[str], cap: int
) -> dict[str, int]:
    """Substring counts up to length 8, occurring at least twice, capped at
    the configured multiple of the target size; single covered characters
    are always kept so the lattice stays connected."""
    substring_counts: dict[str, int] = {}
    for text, mult, _ in samples:
        for run in _segments(text, covered):
            n = len(run)
            for length in range(1, min(SEED_PIECE_MAX_LEN, n) + 1):
                for start in range(n - length + 1):
                    piece = run[start : start + length]
                    substring_counts[piece] = substring_counts.get(piece, 0) + mult
    singles = {p: c for p, c in substring_counts.items() if len(p) == 1}
    multis = [
        (p, c)
        for p, c in substring_counts.items()
        if len(p) > 1 and c >= SEED_PIECE_MIN_COUNT
    ]
    multis.sort(key=lambda kv: (-kv[1], kv[0]))
    kept = dict(singles)
    for piece, count in multis[: max(0, cap - len(singles))]:
        kept[piece] = count
    return kept


class _Lattice:
    """Per-segment edge lists, built once and re-scored every EM pass."""

    def __init__(self, text: str, mult: int, piece_ids: dict[str, int]) -> None:
        self.mult = mult
        self.length = len(text)
        max_len = min(SEED_PIECE_MAX_LEN, self.length)
        # edges_at_end[i]: (start, candidate index) covering text[start:i]
        self.edges_at_end: list[list[tuple[int, int]]] = [
            [] for _ in range(self.length + 1)
        ]
        for end in range(1, self.length + 1):
            for start in range(max(0, end - max_len), end):
                idx = piece_ids.get(text[start:end])
                if idx is not None:
                    self.edges_at_end[end].append((start, idx))
        self.byte_costs = [
            BYTE_SCORE * len(ch.encode("utf-8")) for ch in text
        ]


def _logaddexp(a: float, b: float) -> float:
    if a == float("-inf"):
        return b
    if b == float("-inf"):
        return a
    hi, lo = (a, b) if a > b else (b, a)
    return hi + math.log1p(math.exp(lo - hi))


def _em_pass(
    lattices: list[_Lattice], logprobs: list[float | None]
) -> list[float]:
    """One forward-backward pass; returns expected counts per candidate.

    logprobs holds None for pruned candidates, which drops their edges.
    """
    neg_inf = float("-inf")
    counts = [0.0] * len(logprobs)
    for lattice in lattices:
        n = lattice.length
        alpha = [neg_inf] * (n + 1)
        alpha[0] = 0.0
        for end in range(1, n + 1):
            acc = alpha[end - 1] + lattice.byte_costs[end - 1]
            for start, idx in lattice.edges_at_end[end]:
                w = logprobs[idx]
                if w is None or alpha[start] == neg_inf:
                    continue
                acc = _logaddexp(acc, alpha[start] + w)
            alpha[end] = acc
        beta = [neg_inf] * (n + 1)
        beta[n] = 0.0
        for end in range(n, 0, -1):
            if beta[end] == neg_inf:
                continue
            byte_cand = beta[end] + lattice.byte_costs[end - 1]
            beta[end - 1] = _logaddexp(beta[end - 1], byte_cand)
            for start, idx in lattice.edges_at_end[end]:
                w = logprobs[idx]
                if w is None:
                    continue
                beta[start] = _logaddexp(beta[start], beta[end] + w)
        z = alpha[n]
        if z == neg_inf:
            continue
        for end in range(1, n + 1):
            for start, idx in lattice.edges_at_end[end]:
                w = logprobs[idx]
                if w is None or alpha[start] == neg_inf or beta[end] == neg_inf:
                    continue
                counts[idx] += lattice.mult * math.exp(alpha[start] + w + beta[end] - z)
    return counts


def _maximize(counts: list[float], alive: list[bool]) -> list[float | None]:
    total = sum(c for c, a in zip(counts, alive) if a)
    logprobs: list[float | None] = [None] * len(counts)
    for idx, (count, is_alive) in enumerate(zip(counts, alive)):
        if is_alive:
            logprobs[idx] = math.log(max(count, 1e-12) / total)
    return logprobs


def _alt_logprob(
    piece: str, self_idx: int, piece_ids: dict[str, int], logprobs: list[float | None]
) -> float:
    """Best segmentation of a piece's own string without using the piece."""
    n = len(piece)
    neg_inf = float("-inf")
    best = [neg_inf] * (n + 1)
    best[0] = 0.0
    for end in range(1, n + 1):
        for start in range(max(0, end - SEED_PIECE_MAX_LEN), end):
            if best[start] == neg_inf:
                continue
            idx = piece_ids.get(piece[start:end])
            if idx is None or idx == self_idx:
                continue
            w = logprobs[idx]
            if w is None:
                continue
            if best[start] + w > best[end]:
                best[end] = best[start] + w
        start = end - 1
        byte_cand = best[start] + BYTE_SCORE * len(piece[start].encode("utf-8"))
        if byte_cand > best[end]:
            best[end] = byte_cand
    return best[n]


def train_unigram(
    corpora: Sequence[Iterable[str]],
    plan: SamplingPlan,
    vocab_size: int,
    seed: int,
    sample_budget: int = 10000,
) -> SubwordModel:
    """Train a unigram subword model of exactly vocab_size total entries.

    vocab_size budgets the whole id space, so the trained piece table has
    vocab_size - 256 entries on top of the byte fallback block.  Training
    is deterministic for a fixed seed: same inputs, same serialized bytes.
    """
    corpus_lists = [list(c) for c in corpora]
    if not corpus_lists or all(not c for c in corpus_lists):
        raise EmptyCorpus("no training sentences")
    if len(plan.weights) != len(corpus_lists):
        raise ValueError(
            f"plan covers {len(plan.weights)} corpora, got {len(corpus_lists)}"
        )
    target = vocab_size - N_BYTE_PIECES
    rng = random.Random(seed)
    raw_samples = _sample_sentences(corpus_lists, plan, sample_budget, rng)
    internal_samples = [
        (
            (META_SYMBOL + unicodedata.normalize("NFKC", text)).replace(
                " ", META_SYMBOL
            ),
            mult,
            corpus,
        )
        for text, mult, corpus in raw_samples
    ]
    covered = _covered_chars(internal_samples)
    candidates = _seed_candidates(
        internal_samples, covered, cap=SEED_CAP_MULTIPLIER * max(target, 0)
    )
    n_singles = sum(1 for p in candidates if len(p) == 1)
    if target < n_singles:
        raise VocabTooSmall(
            f"vocab_size {vocab_size} leaves {target} pieces but the sample "
            f"needs {n_singles} single-character pieces plus byte fallback"
        )
    if len(candidates) < target:
        raise CorpusTooSmall(
            f"sample yields only {len(candidates)} candidate pieces for a "
            f"{target}-piece table; enlarge the corpus or lower vocab_size"
        )

    piece_list = sorted(candidates)
    piece_ids = {p: i for i, p in enumerate(piece_list)}
    alive = [True] * len(piece_list)
    total_count = sum(candidates.values())
    logprobs: list[float | None] = [
        math.log(candidates[p] / total_count) for p in piece_list
    ]
    lattices = [
        _Lattice(text, mult, piece_ids) for text, mult, _ in internal_samples
    ]

    def run_em() -> list[float]:
        nonlocal logprobs
        counts = [0.0] * len(piece_list)
        for _ in range(EM_ITERS_PER_ROUND):
            counts = _em_pass(lattices, logprobs)
            logprobs = _maximize(counts, alive)
        return counts

    n_alive = len(piece_list)
    while n_alive > target:
        counts = run_em()
        losses: list[tuple[float, str, int]] = []
        for idx, piece in enumerate(piece_list):
            if not alive[idx] or len(piece) == 1:
                continue  # single-character pieces keep the lattice total
            own = logprobs[idx]
            alt = _alt_logprob(piece, idx, piece_ids, logprobs)
            losses.append((counts[idx] * (own - alt), piece, idx))
        losses.sort(key=lambda item: (item[0], item[1]))
        n_prune = min(
            max(1, int(PRUNE_FRACTION * n_alive)), n_alive - target, len(losses)
        )
        for _, _, idx in losses[:n_prune]:
            alive[idx] = False
            logprobs[idx] = None
        n_alive -= n_prune
    run_em()

    pieces = {
        piece: logprobs[idx]
        for idx, piece in enumerate(piece_list)
        if alive[idx] and logprobs[idx] is not None
    }
    return SubwordModel(pieces, seed=seed)


def corpus_sizes(corpora: Sequence[Sequence[str]]) -> list[int]:
    return [len(c) for c in corpora]
