"""Deterministic text helpers shared by extraction, retrieval and id minting.

Everything here is pure: same string in, same result out, no locale or
environment dependence. Retrieval matching and knowledge-node identity both
build on these, so changing a rule changes node ids across the board.
"""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[a-z0-9]+")

# Suffixes stripped (longest first) when normalizing tokens for matching.
# Kept deliberately tiny: enough that "validation", "validator" and
# "validate" collapse to the same stem, nothing fancier.
_SUFFIXES = ("ations", "ation", "ators", "ator", "ments", "ment",
             "ings", "ing", "ate", "ed", "es")


def raw_tokens(text: str) -> list[str]:
    """Lowercased alphanumeric runs, in order of appearance."""
    return _TOKEN_RE.findall(text.lower())


def stem(token: str) -> str:
    for suffix in _SUFFIXES:
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            return token[: -len(suffix)]
    if token.endswith("s") and len(token) >= 4:
        return token[:-1]
    return token


def normalized_tokens(text: str) -> list[str]:
    """Stemmed lowercase tokens; the unit of overlap everywhere."""
    return [stem(t) for t in raw_tokens(text)]


def token_set(text: str) -> set[str]:
    return set(normalized_tokens(text))


def slug(text: str) -> str:
    """Hyphen-joined raw tokens; used for knowledge-node ids (unstemmed)."""
    return "-".join(raw_tokens(text))


def split_sentences(text: str) -> list[str]:
    """Split on '.', ';' and newlines, trimming whitespace, dropping empties."""
    parts = re.split(r"[.;\n]", text)
    return [p.strip() for p in parts if p.strip()]


def sentence_spans(text: str) -> list[tuple[int, int, str]]:
    """Like split_sentences but with (start, end) char offsets into text.

    The returned slice text[start:end] equals the trimmed sentence, which is
    what evidence fragments must quote verbatim.
    """
    spans = []
    start = 0
    for match in re.finditer(r"[.;\n]", text):
        chunk = text[start:match.start()]
        spans.append((start, chunk))
        start = match.end()
    spans.append((start, text[start:]))
    out = []
    for offset, chunk in spans:
        stripped = chunk.strip()
        if not stripped:
            continue
        lead = len(chunk) - len(chunk.lstrip())
        begin = offset + lead
        out.append((begin, begin + len(stripped), stripped))
    return out
