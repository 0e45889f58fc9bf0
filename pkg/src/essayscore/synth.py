"""Synthetic desk-scale corpora for pipeline validation.

Three generator profiles, all deterministic in their seed:

``overfit16``
    16 short essays graded like a strict rubric: most essays use their
    level's quality word throughout, and any essay mentioning the
    level-0 word scores 0 no matter how strong its other sentences.
    The level-0 word appears only in score-0 essays.

``misspell``
    Planted correct/misspelled word pairs inside identical sentence
    contexts, with the misspelled variants confined to bottom-quartile
    essays. Context alone cannot tell the variants apart; the score can.

``ablation``
    Five score bands marked only by band-exclusive words in otherwise
    identical essays, so embeddings trained without score signal carry
    nothing the downstream scorer can use to rank held-out essays.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

SET_ID = 1

# Score level -> its exclusive quality word (overfit16).
QUALITY_WORDS = ("terrible", "awful", "poor", "weak", "plain", "fair",
                 "decent", "good", "strong", "great", "superb")

TOPIC_WORDS = ("garden", "winter", "music", "harbor", "bridge", "forest",
               "kitchen", "museum", "island", "market", "castle", "river",
               "desert", "library", "mountain", "village")

# (correct, misspelled) pairs planted by the misspell profile.
MISSPELL_PAIRS = (
    ("computer", "copmuter"),
    ("really", "relaly"),
    ("because", "becuase"),
    ("beautiful", "beutiful"),
    ("definitely", "definately"),
)

# Score band -> its exclusive marker words (ablation).
BAND_SCORES = (1, 3, 5, 7, 9)
BAND_WORDS = (
    ("murky", "clumsy", "ragged"),
    ("tepid", "wobbly", "sparse"),
    ("steady", "middling", "common"),
    ("bright", "nimble", "tidy"),
    ("radiant", "masterful", "soaring"),
)


def _essay_text(sentences: list[list[str]]) -> str:
    return " ".join(" ".join(s + ["."]) for s in sentences)


def _sentence(rng, level: str | int) -> list[str]:
    quality = QUALITY_WORDS[level]
    # topic drawn fresh per sentence so it carries no score signal
    topic = TOPIC_WORDS[int(rng.integers(0, len(TOPIC_WORDS)))]
    form = int(rng.integers(0, 3))
    if form == 0:
        return ["my", "essay", "about", "the", topic, "is", quality]
    if form == 1:
        return ["the", topic, "makes", "a", quality, "subject", "for",
                "writing"]
    return ["i", "think", "writing", "about", "the", topic, "is", quality,
            "work"]


def _gen_overfit16(rng) -> list[tuple[int, str, int]]:
    # six essays demonstrate the capping rule: the level-0 word dropped
    # anywhere in otherwise strong writing forces score 0, with the
    # capped sentence alternating so early and late spots are covered.
    # Two sentences per essay keep every token within the scorer's reach.
    scores = [0, 0, 0, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
    rows = []
    for k, score in enumerate(scores):
        sentences = []
        for _ in range(2):
            level = score if score > 0 else int(
                rng.integers(5, len(QUALITY_WORDS)))
            sentences.append(_sentence(rng, level))
        if score == 0:
            capped = sentences[k % 2]
            capped[int(rng.integers(len(capped)))] = QUALITY_WORDS[0]
        rows.append((k + 1, _essay_text(sentences), score))
    return rows


def _gen_misspell(rng) -> list[tuple[int, str, int]]:
    # Ten essays per score; the score-1 group is the bottom quartile and
    # the only one that misspells.
    scores = [1] * 10 + [4] * 10 + [6] * 10 + [9] * 10
    rows = []
    for k, score in enumerate(scores):
        misspelled = score == 1
        sentences = []
        for correct, wrong in MISSPELL_PAIRS:
            word = wrong if misspelled else correct
            for _ in range(int(rng.integers(2, 4))):
                sentences.append(["i", "wrote", "that", "my", "day", "was",
                                  word, "in", "every", "way"])
        order = rng.permutation(len(sentences))
        rows.append((k + 1, _essay_text([sentences[i] for i in order]), score))
    return rows


def _gen_ablation(rng) -> list[tuple[int, str, int]]:
    rows = []
    eid = 1
    for band, score in enumerate(BAND_SCORES):
        for _ in range(12):
            words = BAND_WORDS[band]
            sentences = []
            for j in range(int(rng.integers(6, 9))):
                marker = words[int(rng.integers(0, len(words)))]
                sentences.append(["the", "reviewer", "called", "the",
                                  "chapter", marker, "on", "every", "page"])
            rows.append((eid, _essay_text(sentences), score))
            eid += 1
    return rows


PROFILES = {
    "overfit16": _gen_overfit16,
    "misspell": _gen_misspell,
    "ablation": _gen_ablation,
}


def generate(profile: str, seed: int = 0) -> str:
    """Produce one synthetic corpus as ASAP-style TSV text."""
    try:
        gen = PROFILES[profile]
    except KeyError:
        raise ConfigError(f"unknown synthetic profile {profile!r}; "
                          f"choose from {sorted(PROFILES)}") from None
    rng = np.random.default_rng(seed)
    lines = ["essay_id\tessay_set\tessay\tdomain1_score"]
    for essay_id, text, score in gen(rng):
        lines.append(f"{essay_id}\t{SET_ID}\t{text}\t{score}")
    return "\n".join(lines) + "\n"


def write_tsv(path, profile: str, seed: int = 0):
    """Write a profile's corpus; same profile and seed give identical bytes."""
    text = generate(profile, seed)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
