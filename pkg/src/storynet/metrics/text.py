"""Tokenizer shared by every lexical metric.

Rule: Unicode-lowercase the text, take maximal runs of alphabetic
characters and apostrophes, drop tokens shorter than two characters and
runs without any letter. Stopwords are retained unless asked otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..stopwords import ENGLISH_STOPWORDS


@dataclass
class TokenizedDoc:
    doc_id: str
    tokens: list[str] = field(default_factory=list)


def _keep(ch: str) -> bool:
    # str.isalpha, not regex \w: categories like No (e.g. vulgar fractions)
    # count as word chars under re but are not alphabetic
    return ch.isalpha() or ch == "'"


def tokenize(text: str, doc_id: str = "", drop_stopwords: bool = False) -> TokenizedDoc:
    runs = "".join(ch if _keep(ch) else " " for ch in text.lower()).split()
    tokens = [t for t in runs if len(t) > 1 and any(c.isalpha() for c in t)]
    if drop_stopwords:
        tokens = [t for t in tokens if t not in ENGLISH_STOPWORDS]
    return TokenizedDoc(doc_id=doc_id, tokens=tokens)


def content_tokens(text: str) -> set[str]:
    """Distinct non-stopword tokens of a text (the 'content words')."""
    return {t for t in tokenize(text).tokens if t not in ENGLISH_STOPWORDS}
