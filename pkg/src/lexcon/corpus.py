"""Parallel corpus ingestion, lemma sidecars and blacklist filtering."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import (
    DataError,
    LineCountMismatch,
    MissingSentence,
    TokenCountMismatch,
    Utf8Error,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class Token:
    surface: str
    index: int
    char_start: int


def tokenize(text: str) -> tuple[tuple[str, ...], tuple[int, ...]]:
    """Whitespace tokenization returning words and their character offsets."""
    words: list[str] = []
    starts: list[int] = []
    i, n = 0, len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        words.append(text[i:j])
        starts.append(i)
        i = j
    return tuple(words), tuple(starts)


@dataclass(frozen=True, slots=True)
class Sentence:
    raw: str
    words: tuple[str, ...]
    starts: tuple[int, ...]

    @classmethod
    def from_text(cls, raw: str) -> Sentence:
        words, starts = tokenize(raw)
        return cls(raw, words, starts)

    @property
    def tokens(self) -> list[Token]:
        return [Token(w, i, s) for i, (w, s) in enumerate(zip(self.words, self.starts))]

    def __len__(self) -> int:
        return len(self.words)


@dataclass(frozen=True, slots=True)
class SentencePair:
    id: int
    source: Sentence
    target: Sentence
    source_lemmas: tuple[str, ...] | None = None
    target_lemmas: tuple[str, ...] | None = None

    def __post_init__(self):
        for side, lemmas, sent in (("source", self.source_lemmas, self.source),
                                   ("target", self.target_lemmas, self.target)):
            if lemmas is not None and len(lemmas) != len(sent.words):
                raise TokenCountMismatch(self.id, len(sent.words), len(lemmas))

    @classmethod
    def from_text(cls, id: int, source: str, target: str,
                  source_lemmas: Sequence[str] | None = None,
                  target_lemmas: Sequence[str] | None = None) -> SentencePair:
        return cls(
            id,
            Sentence.from_text(source),
            Sentence.from_text(target),
            None if source_lemmas is None else tuple(l.lower() for l in source_lemmas),
            None if target_lemmas is None else tuple(l.lower() for l in target_lemmas),
        )

    def lemmas(self, side: str) -> tuple[str, ...] | None:
        return self.source_lemmas if side == "source" else self.target_lemmas


@dataclass(frozen=True)
class Corpus:
    pairs: tuple[SentencePair, ...]
    provenance: tuple[str, ...] = ()
    format: str = "moses-2-files"
    _by_id: dict = field(default=None, init=False, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[SentencePair]:
        return iter(self.pairs)

    def __getitem__(self, i: int) -> SentencePair:
        return self.pairs[i]

    def by_id(self, pair_id: int) -> SentencePair:
        if self._by_id is None:
            object.__setattr__(self, "_by_id", {p.id: p for p in self.pairs})
        return self._by_id[pair_id]

    @classmethod
    def from_lines(cls, sources: Sequence[str], targets: Sequence[str]) -> Corpus:
        if len(sources) != len(targets):
            raise LineCountMismatch(len(sources), len(targets))
        return cls(tuple(SentencePair.from_text(i, s, t)
                         for i, (s, t) in enumerate(zip(sources, targets))))


def _read_lines(path) -> list[str]:
    data = Path(path).read_bytes()
    lines = data.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    out = []
    for no, line in enumerate(lines):
        try:
            out.append(line.decode("utf-8"))
        except UnicodeDecodeError:
            raise Utf8Error(path, no) from None
    return out


def load_parallel(source_path, target_path=None, format: str = "moses-2-files") -> Corpus:
    """Load a parallel corpus; ``tsv`` takes a single ``source<TAB>target`` file."""
    if format == "moses-2-files":
        if target_path is None:
            raise DataError("moses-2-files format needs a target path")
        src = _read_lines(source_path)
        tgt = _read_lines(target_path)
        if len(src) != len(tgt):
            raise LineCountMismatch(len(src), len(tgt))
        prov = (str(source_path), str(target_path))
    elif format == "tsv":
        src, tgt = [], []
        for no, line in enumerate(_read_lines(source_path)):
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{source_path}:{no}: expected exactly one TAB")
            src.append(parts[0])
            tgt.append(parts[1])
        prov = (str(source_path),)
    else:
        raise ValueError(f"unknown corpus format {format!r}")
    pairs = tuple(SentencePair.from_text(i, s, t) for i, (s, t) in enumerate(zip(src, tgt)))
    return Corpus(pairs, prov, format)


def serialize(corpus: Corpus) -> tuple[str, str] | str:
    """Inverse of :func:`load_parallel` for the corpus' own format."""
    if corpus.format == "tsv":
        return "".join(f"{p.source.raw}\t{p.target.raw}\n" for p in corpus)
    return ("".join(p.source.raw + "\n" for p in corpus),
            "".join(p.target.raw + "\n" for p in corpus))


def read_conllu(path) -> list[list[tuple[str, str]]]:
    """Return ``(form, lemma)`` rows per sentence; multiword ranges and empty nodes skipped."""
    sentences: list[list[tuple[str, str]]] = []
    current: list[tuple[str, str]] = []
    started = False
    for line in _read_lines(path):
        if not line.strip():
            if started:
                sentences.append(current)
            current, started = [], False
            continue
        if line.startswith("#"):
            started = True
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise DataError(f"{path}: CoNLL-U line with {len(cols)} columns")
        started = True
        if "-" in cols[0] or "." in cols[0]:
            continue
        current.append((cols[1], cols[2]))
    if started:
        sentences.append(current)
    return sentences


def read_token_lemma_tsv(path) -> list[list[tuple[str, str]]]:
    """``token<TAB>lemma`` per line, blank line between sentences."""
    sentences: list[list[tuple[str, str]]] = []
    current: list[tuple[str, str]] = []
    for line in _read_lines(path):
        if not line.strip():
            sentences.append(current)
            current = []
            continue
        form, _, lemma = line.partition("\t")
        current.append((form, lemma or form))
    if current:
        sentences.append(current)
    return sentences


def sidecar_format(path) -> str:
    return "conllu" if str(path).endswith((".conllu", ".conll")) else "tsv-token-lemma"


def attach_lemmas(corpus: Corpus, side: str, sidecar_path, format: str | None = None) -> Corpus:
    if side not in ("source", "target"):
        raise ValueError(f"side must be 'source' or 'target', got {side!r}")
    format = format or sidecar_format(sidecar_path)
    reader = read_conllu if format == "conllu" else read_token_lemma_tsv
    return attach_lemma_rows(corpus, side, reader(sidecar_path))


def attach_lemma_rows(corpus: Corpus, side: str, rows: Sequence[Sequence[tuple[str, str]]]) -> Corpus:
    """Attach already-parsed ``(form, lemma)`` rows; lemmas are lowercased."""
    pairs = []
    for i, pair in enumerate(corpus.pairs):
        if i >= len(rows):
            raise MissingSentence(pair.id)
        sent = pair.source if side == "source" else pair.target
        if len(rows[i]) != len(sent.words):
            raise TokenCountMismatch(pair.id, len(sent.words), len(rows[i]))
        lemmas = tuple((lemma or form).lower() for form, lemma in rows[i])
        key = "source_lemmas" if side == "source" else "target_lemmas"
        pairs.append(replace(pair, **{key: lemmas}))
    if len(rows) > len(corpus.pairs):
        log.warning("sidecar has %d sentences for %d pairs; extra ignored", len(rows), len(corpus.pairs))
    return Corpus(tuple(pairs), corpus.provenance, corpus.format)


def normalize_line(line: str) -> str:
    return " ".join(line.lower().split())


def exclude(corpus: Corpus, blacklist: Iterable[str]) -> Corpus:
    """Drop pairs whose normalized target line is blacklisted; survivors keep their ids."""
    banned = {normalize_line(b) for b in blacklist}
    if not banned:
        return corpus
    kept = tuple(p for p in corpus.pairs if normalize_line(p.target.raw) not in banned)
    return Corpus(kept, corpus.provenance, corpus.format)


def load_corpus(src, tgt, src_lemmas=None, tgt_lemmas=None) -> Corpus:
    corpus = load_parallel(src, tgt)
    if src_lemmas:
        corpus = attach_lemmas(corpus, "source", src_lemmas)
    if tgt_lemmas:
        corpus = attach_lemmas(corpus, "target", tgt_lemmas)
    return corpus
