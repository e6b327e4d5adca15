"""Shared low-level text helpers: tokenization, stopwords, Porter stemming.

Every lexical metric in the toolkit (ROUGE, METEOR, Dist-N, the evidence
oracle objective) goes through :func:`tokenize` so that scores are computed
over one consistent token space.
"""
from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_WORD_RE = re.compile(r"\w+")


def tokenize(text: str) -> list[str]:
    """Lowercase metric tokenization: word runs plus individual punctuation marks."""
    return _TOKEN_RE.findall(text.lower())


def word_tokens(text: str) -> list[str]:
    """Lowercase word-only tokens (punctuation dropped); used for lexical ranking."""
    return _WORD_RE.findall(text.lower())


def normalize_ws(text: str) -> str:
    """Collapse all whitespace runs to single spaces and trim."""
    return " ".join(text.split())


# Compact English stopword list for keyword extraction. Function words only;
# no domain terms.
STOPWORDS = frozenset(
    """
    a about above after again against all am an and any are aren't as at be
    because been before being below between both but by can cannot could
    couldn't did didn't do does doesn't doing don't down during each few for
    from further had hadn't has hasn't have haven't having he her here hers
    herself him himself his how i if in into is isn't it its itself just me
    more most my myself no nor not of off on once only or other our ours
    ourselves out over own same she should shouldn't so some such than that
    the their theirs them themselves then there these they this those through
    to too under until up very was wasn't we were weren't what when where
    which while who whom why will with won't would wouldn't you your yours
    yourself yourselves
    """.split()
)


def is_stopword(token: str) -> bool:
    return token.lower() in STOPWORDS


# ---------------------------------------------------------------------------
# Porter stemmer (the classic 1980 algorithm). Present because the METEOR
# variant needs a stem-match stage and no stemming package is available on
# the internal mirror.
# ---------------------------------------------------------------------------

_VOWELS = "aeiou"


def _is_cons(word: str, i: int) -> bool:
    ch = word[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        return i == 0 or not _is_cons(word, i - 1)
    return True


def _measure(stem: str) -> int:
    """Number of VC sequences in the [C](VC)^m[V] decomposition."""
    runs: list[bool] = []
    for i in range(len(stem)):
        c = _is_cons(stem, i)
        if not runs or runs[-1] != c:
            runs.append(c)
    return sum(1 for i in range(len(runs) - 1) if not runs[i] and runs[i + 1])


def _has_vowel(stem: str) -> bool:
    return any(not _is_cons(stem, i) for i in range(len(stem)))


def _ends_double_cons(word: str) -> bool:
    return len(word) >= 2 and word[-1] == word[-2] and _is_cons(word, len(word) - 1)


def _ends_cvc(word: str) -> bool:
    if len(word) < 3:
        return False
    if not (_is_cons(word, len(word) - 3) and not _is_cons(word, len(word) - 2)
            and _is_cons(word, len(word) - 1)):
        return False
    return word[-1] not in "wxy"


# (suffix, replacement, minimum measure of the remaining stem)
_STEP2 = [
    ("ational", "ate"), ("tional", "tion"), ("enci", "ence"), ("anci", "ance"),
    ("izer", "ize"), ("abli", "able"), ("alli", "al"), ("entli", "ent"),
    ("eli", "e"), ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"),
    ("ator", "ate"), ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
    ("ousness", "ous"), ("aliti", "al"), ("iviti", "ive"), ("biliti", "ble"),
]
_STEP3 = [
    ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
    ("ical", "ic"), ("ful", ""), ("ness", ""),
]
_STEP4 = [
    "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
    "ment", "ent", "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
]


def _longest_suffix(word: str, table: list) -> tuple[str, str] | None:
    best = None
    for entry in table:
        suf = entry if isinstance(entry, str) else entry[0]
        if word.endswith(suf) and (best is None or len(suf) > len(best[0])):
            best = (suf, "" if isinstance(entry, str) else entry[1])
    return best


def porter_stem(word: str) -> str:
    w = word.lower()
    if len(w) <= 2 or not w.isalpha():
        return w

    # step 1a
    if w.endswith("sses"):
        w = w[:-2]
    elif w.endswith("ies"):
        w = w[:-2]
    elif w.endswith("ss"):
        pass
    elif w.endswith("s"):
        w = w[:-1]

    # step 1b
    repaired = False
    if w.endswith("eed"):
        if _measure(w[:-3]) > 0:
            w = w[:-1]
    elif w.endswith("ed") and _has_vowel(w[:-2]):
        w = w[:-2]
        repaired = True
    elif w.endswith("ing") and _has_vowel(w[:-3]):
        w = w[:-3]
        repaired = True
    if repaired:
        if w.endswith(("at", "bl", "iz")):
            w += "e"
        elif _ends_double_cons(w) and w[-1] not in "lsz":
            w = w[:-1]
        elif _measure(w) == 1 and _ends_cvc(w):
            w += "e"

    # step 1c
    if w.endswith("y") and _has_vowel(w[:-1]):
        w = w[:-1] + "i"

    # step 2
    hit = _longest_suffix(w, _STEP2)
    if hit and _measure(w[: -len(hit[0])]) > 0:
        w = w[: -len(hit[0])] + hit[1]

    # step 3
    hit = _longest_suffix(w, _STEP3)
    if hit and _measure(w[: -len(hit[0])]) > 0:
        w = w[: -len(hit[0])] + hit[1]

    # step 4
    hit = _longest_suffix(w, _STEP4)
    if hit:
        stem = w[: -len(hit[0])]
        if _measure(stem) > 1 and (hit[0] != "ion" or stem.endswith(("s", "t"))):
            w = stem

    # step 5a
    if w.endswith("e"):
        stem = w[:-1]
        m = _measure(stem)
        if m > 1 or (m == 1 and not _ends_cvc(stem)):
            w = stem

    # step 5b
    if _measure(w) > 1 and _ends_double_cons(w) and w.endswith("l"):
        w = w[:-1]

    return w
