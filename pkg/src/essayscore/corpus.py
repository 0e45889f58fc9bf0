"""Corpus handling: tokenization, vocabulary, TSV ingestion, splits and
training windows.

The ingestion format is the tab-separated essay dump used by the ASAP
competition: a header row with at least ``essay_id``, ``essay_set``,
``essay`` and ``domain1_score`` columns; extra columns are ignored.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import re
import struct
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
BOUNDARY_TOKEN = "<edge>"

PAD_ID = 0
UNK_ID = 1
BOUNDARY_ID = 2

N_SPECIALS = 3

_PLACEHOLDER_RE = re.compile(r"@[A-Z]+[0-9]*")
_TOKEN_RE = re.compile(r"@[A-Z]+[0-9]*|[A-Za-z0-9]+|\S")

REQUIRED_COLUMNS = ("essay_id", "essay_set", "essay", "domain1_score")


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and split it into word and punctuation tokens.

    Words are maximal alphanumeric runs; any other non-space character
    becomes a standalone token. Anonymization placeholders such as
    ``@CAPS3`` are kept verbatim, case intact. Empty text gives an empty
    list.
    """
    tokens = []
    for match in _TOKEN_RE.finditer(text):
        tok = match.group()
        if tok[0] == "@" and _PLACEHOLDER_RE.fullmatch(tok):
            tokens.append(tok)
        else:
            tokens.append(tok.lower())
    return tokens


class Vocabulary:
    """Bijective token <-> id mapping with reserved special ids.

    Ids 0, 1 and 2 are the padding, unknown-word and window-boundary
    tokens; corpus tokens start at id 3, assigned by descending frequency
    with lexicographic tie-breaking so two corpora with identical
    frequency profiles get identical ids.
    """

    def __init__(self, tokens: list[str], min_count: int = 1):
        self.min_count = min_count
        self.id_to_token = [PAD_TOKEN, UNK_TOKEN, BOUNDARY_TOKEN] + list(tokens)
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise DataError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    @property
    def n_words(self) -> int:
        """Number of non-special entries."""
        return len(self.id_to_token) - N_SPECIALS

    def encode(self, tokens: list[str]) -> list[int]:
        """Map tokens to ids; out-of-vocabulary tokens map to UNK."""
        get = self.token_to_id.get
        return [get(tok, UNK_ID) for tok in tokens]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def id_of(self, token: str) -> int:
        try:
            return self.token_to_id[token]
        except KeyError:
            raise KeyError(f"token {token!r} not in vocabulary") from None


def build_vocabulary(token_sequences, min_count: int = 2) -> Vocabulary:
    """Build a :class:`Vocabulary` from an iterable of token sequences.

    Tokens seen fewer than ``min_count`` times are dropped (they encode
    to UNK later). An empty corpus yields a vocabulary holding only the
    special tokens.
    """
    if min_count < 1:
        raise ConfigError(f"min_count must be >= 1, got {min_count}")
    counts = Counter()
    for seq in token_sequences:
        counts.update(seq)
    kept = [tok for tok, c in counts.items() if c >= min_count]
    kept.sort(key=lambda tok: (-counts[tok], tok))
    return Vocabulary(kept, min_count=min_count)


@dataclass(frozen=True)
class ScoreRange:
    """Inclusive raw-score range of one essay set."""

    lo: float
    hi: float

    def scale(self, raw: float) -> float:
        """Map a raw score into [0, 1]; degenerate ranges map to 0.5."""
        if self.hi == self.lo:
            return 0.5
        return (raw - self.lo) / (self.hi - self.lo)

    def unscale(self, scaled: float) -> float:
        return self.lo + scaled * (self.hi - self.lo)

    def clamp(self, raw: float) -> float:
        return min(max(raw, self.lo), self.hi)


@dataclass
class RawEssay:
    """One ingested row before vocabulary encoding."""

    essay_id: int
    set_id: int
    tokens: list[str]
    raw_score: float


@dataclass
class Essay:
    """A scored, tokenized essay with ids from one :class:`Vocabulary`."""

    essay_id: int
    set_id: int
    tokens: list[int]
    raw_score: float
    scaled_score: float


@dataclass(frozen=True)
class RowError:
    """A rejected ingestion row."""

    line: int
    message: str


@dataclass
class IngestResult:
    essays: list[RawEssay]
    ranges: dict[int, ScoreRange]
    row_errors: list[RowError]


def ingest_asap_tsv(path, ranges: dict[int, ScoreRange] | None = None,
                    encoding: str = "utf-8") -> IngestResult:
    """Read an ASAP-style TSV into raw essays plus per-set score ranges.

    Rows that fail to parse are reported in ``row_errors`` with their
    line number; the remaining rows are still ingested. When ``ranges``
    is not supplied, each set's range is the observed min/max of its
    scores. A missing required column raises :class:`DataError` naming
    the column.
    """
    essays = []
    row_errors = []
    with open(path, encoding=encoding, newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        header = reader.fieldnames or []
        for col in REQUIRED_COLUMNS:
            if col not in header:
                raise DataError(f"missing required column {col!r} in {path}")
        for lineno, row in enumerate(reader, start=2):
            try:
                essay_id = int(row["essay_id"])
                set_id = int(row["essay_set"])
            except (TypeError, ValueError):
                row_errors.append(RowError(lineno, "non-integer essay_id or essay_set"))
                continue
            try:
                raw_score = float(row["domain1_score"])
            except (TypeError, ValueError):
                row_errors.append(RowError(
                    lineno, f"non-numeric domain1_score {row['domain1_score']!r}"))
                continue
            if not math.isfinite(raw_score):
                row_errors.append(RowError(lineno, "non-finite domain1_score"))
                continue
            text = row["essay"] or ""
            tokens = tokenize(text)
            if not tokens:
                row_errors.append(RowError(lineno, "essay text is empty"))
                continue
            essays.append(RawEssay(essay_id, set_id, tokens, raw_score))

    if ranges is None:
        ranges = {}
        for e in essays:
            r = ranges.get(e.set_id)
            if r is None:
                ranges[e.set_id] = ScoreRange(e.raw_score, e.raw_score)
            else:
                ranges[e.set_id] = ScoreRange(min(r.lo, e.raw_score),
                                              max(r.hi, e.raw_score))
    else:
        in_range = []
        for e in essays:
            r = ranges.get(e.set_id)
            if r is None:
                row_errors.append(RowError(0, f"essay {e.essay_id}: set {e.set_id} "
                                              "missing from score-range table"))
            elif not (r.lo <= e.raw_score <= r.hi):
                row_errors.append(RowError(0, f"essay {e.essay_id}: score "
                                              f"{e.raw_score} outside [{r.lo}, {r.hi}]"))
            else:
                in_range.append(e)
        essays = in_range

    return IngestResult(essays, ranges, row_errors)


def encode_essays(raw_essays: list[RawEssay], vocab: Vocabulary,
                  ranges: dict[int, ScoreRange]) -> list[Essay]:
    """Encode ingested rows against a vocabulary and scale their scores."""
    out = []
    for e in raw_essays:
        rng = ranges[e.set_id]
        out.append(Essay(e.essay_id, e.set_id, vocab.encode(e.tokens),
                         e.raw_score, rng.scale(e.raw_score)))
    return out


def read_range_table(path) -> dict[int, ScoreRange]:
    """Parse a ``set_id<TAB>min<TAB>max`` score-range table."""
    ranges = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected set_id<TAB>min<TAB>max")
            try:
                set_id, lo, hi = int(parts[0]), float(parts[1]), float(parts[2])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if hi < lo:
                raise DataError(f"{path}:{lineno}: max < min")
            ranges[set_id] = ScoreRange(lo, hi)
    return ranges


@dataclass(frozen=True)
class SplitSpec:
    """Ratios and seed for the deterministic train/validation/test split."""

    ratios: tuple[float, float, float] = (0.64, 0.16, 0.20)
    seed: int = 0


def _split_key(essay_id: int, seed: int) -> bytes:
    key = struct.pack("<Q", seed & 0xFFFFFFFFFFFFFFFF)
    return hashlib.blake2b(str(essay_id).encode(), digest_size=8, key=key).digest()


def split_corpus(essays: list[Essay], spec: SplitSpec = SplitSpec()):
    """Partition essays into (train, validation, test) lists.

    The split is stratified by set: each essay set is cut independently
    at the same ratios, with integer remainders going to train. Bucket
    membership depends only on the essay ids present in a set and the
    seed, never on input order.
    """
    if abs(sum(spec.ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios {spec.ratios} do not sum to 1")
    if any(r < 0 for r in spec.ratios):
        raise ConfigError(f"split ratios must be non-negative, got {spec.ratios}")

    by_set: dict[int, list[Essay]] = {}
    for e in essays:
        by_set.setdefault(e.set_id, []).append(e)

    val_ids, test_ids = set(), set()
    for set_id in sorted(by_set):
        members = by_set[set_id]
        order = sorted(members, key=lambda e: (_split_key(e.essay_id, spec.seed),
                                               e.essay_id))
        n = len(order)
        n_val = int(math.floor(spec.ratios[1] * n + 1e-9))
        n_test = int(math.floor(spec.ratios[2] * n + 1e-9))
        test_ids.update(e.essay_id for e in order[:n_test])
        val_ids.update(e.essay_id for e in order[n_test:n_test + n_val])

    train = [e for e in essays if e.essay_id not in val_ids
             and e.essay_id not in test_ids]
    val = [e for e in essays if e.essay_id in val_ids]
    test = [e for e in essays if e.essay_id in test_ids]
    return train, val, test


@dataclass(frozen=True)
class WindowSample:
    """An n-gram training window centered on one target token."""

    context: tuple[int, ...]
    center_index: int
    scaled_score: float
    source_essay: int

    @property
    def target(self) -> int:
        return self.context[self.center_index]


def extract_windows(essay: Essay, n: int) -> list[WindowSample]:
    """One window per token position, boundary-padded at the essay edges."""
    if n % 2 == 0 or n < 3:
        raise ConfigError(f"window size must be odd and >= 3, got {n}")
    half = (n - 1) // 2
    padded = [BOUNDARY_ID] * half + list(essay.tokens) + [BOUNDARY_ID] * half
    return [WindowSample(tuple(padded[i:i + n]), half, essay.scaled_score,
                         essay.essay_id)
            for i in range(len(essay.tokens))]


def corrupt_window(sample: WindowSample, n_corruptions: int, rng,
                   vocab: Vocabulary) -> list[tuple[int, ...]]:
    """Draw corrupted contexts replacing the center with random words.

    Replacements are uniform over non-special vocabulary ids excluding
    the true target, drawn with replacement.
    """
    if n_corruptions < 1:
        raise ConfigError(f"need at least one corruption, got {n_corruptions}")
    target = sample.target
    n_candidates = vocab.n_words
    target_off = target - N_SPECIALS if target >= N_SPECIALS else None
    if target_off is not None:
        n_candidates -= 1
    if n_candidates < 1:
        raise DataError("vocabulary too small to corrupt the target word")

    draws = rng.integers(0, n_candidates, size=n_corruptions)
    if target_off is not None:
        draws = np.where(draws >= target_off, draws + 1, draws)
    prefix = sample.context[:sample.center_index]
    suffix = sample.context[sample.center_index + 1:]
    return [prefix + (int(d) + N_SPECIALS,) + suffix for d in draws]


# --- split manifests and the corpus cache -------------------------------

def write_manifest(path, essay_ids, config_hash: str | None = None):
    """Write essay ids one per line; a leading '#' line carries metadata."""
    with open(path, "w", encoding="utf-8") as fh:
        if config_hash:
            fh.write(f"# config {config_hash}\n")
        for eid in essay_ids:
            fh.write(f"{eid}\n")


def read_manifest(path) -> list[int]:
    ids = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                ids.append(int(line))
            except ValueError:
                raise DataError(f"{path}:{lineno}: not an essay id: {line!r}") from None
    return ids


@dataclass
class Corpus:
    """Encoded essays plus the vocabulary and score ranges they share."""

    essays: list[Essay]
    vocab: Vocabulary
    ranges: dict[int, ScoreRange]

    def by_id(self, essay_id: int) -> Essay:
        for e in self.essays:
            if e.essay_id == essay_id:
                return e
        raise KeyError(f"essay id {essay_id} not in corpus")

    def subset(self, essay_ids) -> list[Essay]:
        wanted = set(essay_ids)
        found = [e for e in self.essays if e.essay_id in wanted]
        if len(found) != len(wanted):
            missing = wanted - {e.essay_id for e in found}
            raise DataError(f"essay ids missing from corpus: {sorted(missing)[:5]}")
        return found


def load_corpus(path, min_count: int = 2,
                ranges: dict[int, ScoreRange] | None = None,
                encoding: str = "utf-8") -> tuple[Corpus, list[RowError]]:
    """Ingest a TSV, build the vocabulary and encode all essays."""
    result = ingest_asap_tsv(path, ranges=ranges, encoding=encoding)
    vocab = build_vocabulary((e.tokens for e in result.essays), min_count=min_count)
    essays = encode_essays(result.essays, vocab, result.ranges)
    return Corpus(essays, vocab, result.ranges), result.row_errors


def save_corpus_cache(path, corpus: Corpus, config_hash: str = ""):
    payload = {
        "config_hash": config_hash,
        "min_count": corpus.vocab.min_count,
        "vocabulary": corpus.vocab.id_to_token[N_SPECIALS:],
        "ranges": {str(k): [r.lo, r.hi] for k, r in sorted(corpus.ranges.items())},
        "essays": [
            {"id": e.essay_id, "set": e.set_id, "score": e.raw_score,
             "tokens": e.tokens}
            for e in corpus.essays
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_corpus_cache(path) -> tuple[Corpus, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt corpus cache {path}: {exc}") from None
    try:
        vocab = Vocabulary(payload["vocabulary"], min_count=payload["min_count"])
        ranges = {int(k): ScoreRange(lo, hi)
                  for k, (lo, hi) in payload["ranges"].items()}
        essays = [Essay(d["id"], d["set"], list(d["tokens"]), d["score"],
                        ranges[d["set"]].scale(d["score"]))
                  for d in payload["essays"]]
    except (KeyError, TypeError) as exc:
        raise DataError(f"corrupt corpus cache {path}: missing field {exc}") from None
    return Corpus(essays, vocab, ranges), payload.get("config_hash", "")
