"""Context-free token normalizers: identity, lemma table and a rule stemmer."""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError

log = logging.getLogger(__name__)

MIN_STEM = 2
KINDS = ("identity", "lemma-table", "stemmer")


@dataclass(frozen=True)
class TableStats:
    surfaces: int
    ambiguous: int

    @property
    def ambiguity_rate(self) -> float:
        return self.ambiguous / self.surfaces if self.surfaces else 0.0


@dataclass(frozen=True)
class Analyzer:
    kind: str = "identity"
    table: dict[str, str] | None = None
    rules: tuple[tuple[str, str], ...] | None = None
    stats: TableStats | None = field(default=None, compare=False)
    _by_suffix: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown analyzer kind {self.kind!r}")
        if self.kind == "lemma-table" and self.table is None:
            raise ValueError("lemma-table analyzer needs a table")
        if self.kind == "stemmer":
            if not self.rules:
                raise ValueError("stemmer analyzer needs rules")
            by_suffix = {}
            for suffix, repl in self.rules:
                if not suffix or len(repl) >= len(suffix):
                    raise DataError(f"stemmer rule {suffix!r}->{repl!r} must shorten the word")
                by_suffix.setdefault(suffix, repl)
            object.__setattr__(self, "_by_suffix", by_suffix)

    def normalize(self, token: str) -> str:
        low = token.lower()
        if self.kind == "identity":
            return low
        if self.kind == "lemma-table":
            return self.table.get(low, low)
        return self._stem(low)

    def normalize_sequence(self, tokens: Iterable[str]) -> list[str]:
        return [self.normalize(t) for t in tokens]

    def _stem(self, word: str) -> str:
        if not any(ch.isalpha() for ch in word):
            return word
        rules = self._by_suffix
        longest = max(map(len, rules))
        # Iterate to a fixpoint so that stem(stem(w)) == stem(w).
        while True:
            for n in range(min(longest, len(word) - 1), 0, -1):
                repl = rules.get(word[-n:])
                if repl is not None and len(word) - n + len(repl) >= MIN_STEM:
                    word = word[:-n] + repl
                    break
            else:
                return word


def normalize(analyzer: Analyzer, token: str) -> str:
    return analyzer.normalize(token)


def normalize_sequence(analyzer: Analyzer, tokens: Sequence[str]) -> list[str]:
    return analyzer.normalize_sequence(tokens)


def identity() -> Analyzer:
    return Analyzer("identity")


def read_rules(path) -> tuple[tuple[str, str], ...]:
    rules = []
    for no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip() or line.startswith("#"):
            continue
        suffix, _, repl = line.partition("\t")
        if not suffix:
            raise DataError(f"{path}:{no}: empty suffix")
        rules.append((suffix, repl))
    return tuple(rules)


def czech_stemmer(rule_path=None) -> Analyzer:
    """Light Czech stemmer; ``rule_path`` overrides the shipped rule table."""
    if rule_path is None:
        rule_path = resources.files("lexcon") / "data" / "czech_light_stemmer.tsv"
    return Analyzer("stemmer", rules=read_rules(rule_path))


def table_from_pairs(pairs: Iterable[tuple[str, str]]) -> Analyzer:
    """Build a functional table: each surface keeps its most frequent lemma.

    Ties go to the lemma seen first. The share of surfaces observed with more
    than one lemma is kept in ``stats`` and logged.
    """
    counts: dict[str, Counter] = defaultdict(Counter)
    for surface, lemma in pairs:
        counts[surface.lower()][lemma.lower()] += 1
    table = {}
    ambiguous = 0
    for surface, lemmas in counts.items():
        # Counter.most_common is stable on ties (insertion order).
        table[surface] = lemmas.most_common(1)[0][0]
        ambiguous += len(lemmas) > 1
    stats = TableStats(len(table), ambiguous)
    if ambiguous:
        log.info("lemma table: %d of %d surfaces ambiguous (%.2f%%)",
                 ambiguous, len(table), 100 * stats.ambiguity_rate)
    return Analyzer("lemma-table", table=table, stats=stats)


def read_lemma_table(path) -> Analyzer:
    rows = []
    for no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip() or line.startswith("#"):
            continue
        surface, sep, lemma = line.partition("\t")
        if not sep or not surface or not lemma:
            raise DataError(f"{path}:{no}: expected surface<TAB>lemma")
        rows.append((surface, lemma))
    return table_from_pairs(rows)


def table_from_corpus(corpus, side: str = "target") -> Analyzer:
    rows = []
    for pair in corpus:
        lemmas = pair.lemmas(side)
        if lemmas is None:
            continue
        words = pair.source.words if side == "source" else pair.target.words
        rows.extend(zip(words, lemmas))
    return table_from_pairs(rows)


def make_analyzer(kind: str, path=None) -> Analyzer:
    if kind == "identity":
        return identity()
    if kind == "stemmer":
        return czech_stemmer(path)
    if kind == "lemma-table":
        if path is None:
            raise ValueError("lemma-table analyzer needs a table path")
        return read_lemma_table(path)
    raise ValueError(f"unknown analyzer kind {kind!r}")


def derive_lemmas(corpus, side: str, analyzer: Analyzer):
    """Fill a missing lemma layer by running ``analyzer`` over the surface tokens."""
    from .corpus import attach_lemma_rows

    rows = []
    for pair in corpus:
        words = pair.source.words if side == "source" else pair.target.words
        rows.append([(w, analyzer.normalize(w)) for w in words])
    return attach_lemma_rows(corpus, side, rows)
