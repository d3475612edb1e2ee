"""Bilingual dictionaries and termbases keyed by normalized token sequences."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Corpus, SentencePair
from .errors import EmptyEntry, MissingLemmaLayer
from .morph import Analyzer, identity

log = logging.getLogger(__name__)

MODES = ("dictionary", "terminology")


@dataclass(frozen=True, slots=True)
class TermEntry:
    entry_id: int
    source_tokens: tuple[str, ...]
    target_tokens: tuple[str, ...]
    source_key: tuple[str, ...]
    target_key: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class TermMatch:
    entry_id: int
    source_span: tuple[int, int]
    target_span: tuple[int, int] | None = None


def is_trivial(source_key: Sequence[str], target_key: Sequence[str]) -> bool:
    """Copy pairs and one-token keys of at most two characters carry no signal."""
    if tuple(source_key) == tuple(target_key):
        return True
    return any(len(k) == 1 and len(k[0]) <= 2 for k in (source_key, target_key))


class _Trie:
    __slots__ = ("children", "key")

    def __init__(self):
        self.children: dict[str, _Trie] = {}
        self.key: tuple[str, ...] | None = None


@dataclass
class TermLexicon:
    entries: list[TermEntry]
    mode: str = "dictionary"
    provenance: str = ""
    dropped_trivial: int = 0
    source_index: dict[tuple[str, ...], list[int]] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown lexicon mode {self.mode!r}")
        if not self.source_index:
            index: dict[tuple[str, ...], list[int]] = defaultdict(list)
            for e in self.entries:
                index[e.source_key].append(e.entry_id)
            self.source_index = dict(index)
        self._by_id = {e.entry_id: e for e in self.entries}
        self._trie = _Trie()
        for key in self.source_index:
            node = self._trie
            for tok in key:
                node = node.children.setdefault(tok, _Trie())
            node.key = key

    def __len__(self) -> int:
        return len(self.entries)

    def entry(self, entry_id: int) -> TermEntry:
        return self._by_id[entry_id]

    def variants(self, source_key: Sequence[str]) -> list[TermEntry]:
        return [self._by_id[i] for i in self.source_index.get(tuple(source_key), ())]

    def restrict(self, keep: Iterable[int]) -> TermLexicon:
        keep = set(keep)
        return TermLexicon([e for e in self.entries if e.entry_id in keep], self.mode, self.provenance)

    def source_occurrences(self, lemmas: Sequence[str]) -> list[tuple[int, int, tuple[str, ...]]]:
        """Every ``(start, end, key)`` where a source key occurs in ``lemmas``."""
        out = []
        root = self._trie
        for i in range(len(lemmas)):
            node = root
            j = i
            while j < len(lemmas):
                node = node.children.get(lemmas[j])
                if node is None:
                    break
                j += 1
                if node.key is not None:
                    out.append((i, j, node.key))
        return out


def add_entries(rows: Iterable[tuple[int, str, str]], src_analyzer: Analyzer, tgt_analyzer: Analyzer,
                mode: str = "dictionary", provenance: str = "") -> TermLexicon:
    entries: list[TermEntry] = []
    seen_keys: set[tuple[str, ...]] = set()
    trivial = duplicates = 0
    for line_no, source, target in rows:
        src, tgt = tuple(source.split()), tuple(target.split())
        if not src or not tgt:
            raise EmptyEntry(line_no)
        skey = tuple(src_analyzer.normalize_sequence(src))
        tkey = tuple(tgt_analyzer.normalize_sequence(tgt))
        if is_trivial(skey, tkey):
            trivial += 1
            continue
        if mode == "terminology" and skey in seen_keys:
            duplicates += 1
            continue
        seen_keys.add(skey)
        entries.append(TermEntry(len(entries), src, tgt, skey, tkey))
    if trivial:
        log.info("lexicon: dropped %d trivial entries", trivial)
    if duplicates:
        log.warning("terminology: dropped %d entries repeating an earlier source term", duplicates)
    lex = TermLexicon(entries, mode, provenance, dropped_trivial=trivial)
    return lex


def read_pairs_file(path) -> list[tuple[int, str, str]]:
    rows = []
    for no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        source, sep, target = line.partition("\t")
        if not sep or not source.strip() or not target.strip():
            raise EmptyEntry(no)
        rows.append((no, source, target))
    return rows


def build_lexicon(pairs_file, src_analyzer: Analyzer | None = None, tgt_analyzer: Analyzer | None = None,
                  mode: str = "dictionary") -> TermLexicon:
    return add_entries(read_pairs_file(pairs_file), src_analyzer or identity(),
                       tgt_analyzer or identity(), mode, str(pairs_file))


def lexicon_from_terms(terms: Iterable[tuple[str, str]], src_analyzer: Analyzer | None = None,
                       tgt_analyzer: Analyzer | None = None, mode: str = "dictionary") -> TermLexicon:
    rows = [(i, s, t) for i, (s, t) in enumerate(terms)]
    return add_entries(rows, src_analyzer or identity(), tgt_analyzer or identity(), mode)


def select_spans(candidates: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
    """Non-overlapping subset: longest spans first, leftmost on ties; sorted by start."""
    chosen: list[tuple[int, int]] = []
    taken: set[int] = set()
    for start, end in sorted(set(candidates), key=lambda s: (s[0] - s[1], s[0])):
        if not taken.intersection(range(start, end)):
            chosen.append((start, end))
            taken.update(range(start, end))
    return sorted(chosen)


def find_subsequence(hay: Sequence[str], needle: Sequence[str], blocked: set[int] | None = None,
                     start: int = 0) -> int:
    """Index of the first occurrence of ``needle`` at or after ``start`` avoiding ``blocked``; -1 if none."""
    n = len(needle)
    first = needle[0]
    for i in range(start, len(hay) - n + 1):
        if hay[i] == first and tuple(hay[i:i + n]) == tuple(needle):
            if blocked and blocked.intersection(range(i, i + n)):
                continue
            return i
    return -1


def _require(pair: SentencePair, side: str) -> tuple[str, ...]:
    lemmas = pair.lemmas(side)
    if lemmas is None:
        raise MissingLemmaLayer(side, pair.id)
    return lemmas


def find_matches(lexicon: TermLexicon, pair: SentencePair, require_target: bool = True) -> list[TermMatch]:
    """Term occurrences in ``pair``, matched on lemma layers.

    Source spans are resolved to a non-overlapping set first (longest wins,
    leftmost on ties). With ``require_target`` a span is kept only if one of its
    entries' target keys occurs in the target lemmas at a position not used by
    an earlier match; that entry and its target span are reported.
    """
    src = _require(pair, "source")
    if not lexicon.entries:
        return []
    occ = lexicon.source_occurrences(src)
    spans = select_spans((s, e) for s, e, _ in occ)
    if not require_target:
        return [TermMatch(lexicon.source_index[tuple(src[s:e])][0], (s, e)) for s, e in spans]
    tgt = _require(pair, "target")
    used: set[int] = set()
    out = []
    for s, e in spans:
        for entry_id in lexicon.source_index[tuple(src[s:e])]:
            key = lexicon.entry(entry_id).target_key
            at = find_subsequence(tgt, key, used)
            if at >= 0:
                used.update(range(at, at + len(key)))
                out.append(TermMatch(entry_id, (s, e), (at, at + len(key))))
                break
    return out


def term_frequencies(lexicon: TermLexicon, corpus: Corpus) -> dict[int, int]:
    """Source-side occurrence counts per entry (overlapping occurrences all count)."""
    per_key: dict[tuple[str, ...], int] = defaultdict(int)
    for pair in corpus:
        for _, _, key in lexicon.source_occurrences(_require(pair, "source")):
            per_key[key] += 1
    return {e.entry_id: per_key.get(e.source_key, 0) for e in lexicon.entries}
