"""Seeded generator for a small AG-News-shaped corpus.

Produces headline-like records ``{"text", "label"}`` across the four news
categories, with category-specific word banks so the classes are separable by
a character-level model.  The output is deterministic for a given seed and
size, which keeps end-to-end runs byte-reproducible.
"""

from __future__ import annotations

import json
import random
from typing import Dict, List

from .data import LABEL_NAMES

_WORDS: Dict[str, List[str]] = {
    "World": [
        "government", "election", "minister", "treaty", "embassy", "border",
        "parliament", "diplomat", "sanctions", "summit", "refugee", "ceasefire",
        "president", "protest", "coalition", "nation",
    ],
    "Sports": [
        "championship", "league", "coach", "stadium", "playoff", "tournament",
        "striker", "goalkeeper", "season", "victory", "olympics", "marathon",
        "quarterback", "referee", "penalty", "trophy",
    ],
    "Business": [
        "market", "shares", "profit", "merger", "investor", "quarterly",
        "earnings", "stocks", "banking", "revenue", "economy", "inflation",
        "takeover", "dividend", "futures", "retail",
    ],
    "Sci/Tech": [
        "software", "satellite", "research", "quantum", "processor", "genome",
        "telescope", "robotics", "internet", "algorithm", "spacecraft", "vaccine",
        "semiconductor", "laboratory", "encryption", "browser",
    ],
}

_VERBS = ["announces", "reports", "wins", "faces", "launches", "reveals",
          "expands", "rejects", "confirms", "unveils", "suspends", "approves"]

_TAILS = ["on Monday", "this week", "after talks", "amid concerns",
          "in new deal", "despite setback", "for 2004", "worldwide",
          "at record pace", "in surprise move"]


def _headline(rng: random.Random, label: str) -> str:
    a, b = rng.sample(_WORDS[label], 2)
    verb = rng.choice(_VERBS)
    tail = rng.choice(_TAILS)
    # Mixed-case output exercises the loader's lowercasing rule.
    return f"{a.capitalize()} {verb} {b} {tail}"


_AMBIGUOUS_PER_PAIR = 6


def _ambiguous_pool(seed: int) -> List[tuple]:
    """Recurring mixed-topic headlines, each tied to its two source categories.

    The same pooled text shows up repeatedly across the corpus with its label
    flipped between the two categories, so those records stay irreducibly hard
    no matter how long a model trains.  That persistence is what gives
    confidence-style objectives a real, non-memorizable signal.
    """
    # Separate derived stream: building the pool must not perturb the main
    # record stream, or ambiguous_fraction=0 corpora would change bytes.
    rng = random.Random(f"{seed}-ambiguous-pool")
    pool = []
    for i, a in enumerate(LABEL_NAMES):
        for b in LABEL_NAMES[i + 1:]:
            for _ in range(_AMBIGUOUS_PER_PAIR):
                wa = rng.choice(_WORDS[a])
                wb = rng.choice(_WORDS[b])
                verb = rng.choice(_VERBS)
                tail = rng.choice(_TAILS)
                pool.append((f"{wa.capitalize()} {verb} {wb} {tail}", a, b))
    return pool


def generate_corpus(n: int, seed: int = 42,
                    ambiguous_fraction: float = 0.0) -> List[Dict[str, str]]:
    """Generate n balanced records, labels cycling through the four classes.

    ``ambiguous_fraction`` of the records are drawn from a fixed pool of
    mixed-category headlines; each instance's label is a coin flip between
    the two source categories.
    """
    rng = random.Random(seed)
    pool = _ambiguous_pool(seed) if ambiguous_fraction > 0 else []
    records = []
    for i in range(n):
        label = LABEL_NAMES[i % len(LABEL_NAMES)]
        if pool and rng.random() < ambiguous_fraction:
            text, a, b = rng.choice(pool)
            label = rng.choice([a, b])
        else:
            text = _headline(rng, label)
        records.append({"text": text, "label": label})
    return records


def write_corpus(path: str, n: int, seed: int = 42,
                 ambiguous_fraction: float = 0.0) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(generate_corpus(n, seed, ambiguous_fraction), fh,
                  ensure_ascii=False, indent=1)
        fh.write("\n")
