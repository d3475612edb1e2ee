"""Model-input serialization of (source sentence, constraints).

Three layouts are produced:

``suffix``      ``src ... <sep> c1 <c> c2``, positions continue after the source
``suffix-shift`` same tokens, the constraint block is numbered from 1024
``prefix``      ``c1 <c> c2 <sep> src ...``, positions from 0
``factored``    each aligned source span is followed by its target tokens,
                with ``O``/``SRC``/``TGT`` labels per token
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import Corpus, SentencePair
from .errors import MissingSourceSpan, ReservedTokenError
from .synth import ConstraintSet

SEP = "<sep>"
CSEP = "<c>"
SHIFT = 1024
FORMATS = ("suffix", "suffix-shift", "prefix", "factored")
O, SRC, TGT = "O", "SRC", "TGT"


@dataclass(frozen=True, slots=True)
class AnnotatedExample:
    pair_id: int
    input_tokens: tuple[str, ...]
    target_line: str
    positions: tuple[int, ...]
    format: str
    factor_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if len(self.positions) != len(self.input_tokens):
            raise ValueError("positions and tokens differ in length")
        if self.format == "factored" and (self.factor_labels is None
                                          or len(self.factor_labels) != len(self.input_tokens)):
            raise ValueError("factored example needs one label per token")

    @property
    def line(self) -> str:
        return " ".join(self.input_tokens)

    @property
    def factored_line(self) -> str:
        return " ".join(f"{t}|{f}" for t, f in zip(self.input_tokens, self.factor_labels))


def constraint_block(cs: ConstraintSet) -> list[str]:
    """``c1 <c> c2 ...`` (no ``<sep>``); empty for skipped or empty sets."""
    block: list[str] = []
    for i, c in enumerate(cs.constraints):
        if i:
            block.append(CSEP)
        block.extend(c.tokens)
    return block


def assemble_suffix(pair: SentencePair, cs: ConstraintSet, shift: bool = False) -> AnnotatedExample:
    src = list(pair.source.words)
    block = constraint_block(cs)
    n = len(src)
    tokens = src + ([SEP] + block if block else [])
    first = SHIFT if shift else n
    positions = list(range(n)) + list(range(first, first + len(tokens) - n))
    return AnnotatedExample(pair.id, tuple(tokens), pair.target.raw, tuple(positions),
                            "suffix-shift" if shift else "suffix")


def assemble_prefix(pair: SentencePair, cs: ConstraintSet) -> AnnotatedExample:
    block = constraint_block(cs)
    tokens = (block + [SEP] if block else []) + list(pair.source.words)
    return AnnotatedExample(pair.id, tuple(tokens), pair.target.raw, tuple(range(len(tokens))), "prefix")


def assemble_factored(pair: SentencePair, cs: ConstraintSet) -> AnnotatedExample:
    inserts: dict[int, list[str]] = {}
    in_span = [False] * len(pair.source.words)
    for i, c in enumerate(cs.constraints):
        if c.source_span is None:
            raise MissingSourceSpan(i, pair.id)
        s, e = c.source_span
        for k in range(s, e):
            in_span[k] = True
        inserts.setdefault(e - 1, []).extend(c.tokens)
    tokens: list[str] = []
    labels: list[str] = []
    for k, word in enumerate(pair.source.words):
        tokens.append(word)
        labels.append(SRC if in_span[k] else O)
        extra = inserts.get(k)
        if extra:
            tokens.extend(extra)
            labels.extend([TGT] * len(extra))
    return AnnotatedExample(pair.id, tuple(tokens), pair.target.raw, tuple(range(len(tokens))),
                            "factored", tuple(labels))


def assemble(pair: SentencePair, cs: ConstraintSet, format: str) -> AnnotatedExample:
    if format == "suffix":
        return assemble_suffix(pair, cs, shift=False)
    if format == "suffix-shift":
        return assemble_suffix(pair, cs, shift=True)
    if format == "prefix":
        return assemble_prefix(pair, cs)
    if format == "factored":
        return assemble_factored(pair, cs)
    raise ValueError(f"unknown format {format!r}")


def strip(example: AnnotatedExample) -> list[str]:
    """Recover the source tokens from an assembled example."""
    toks = list(example.input_tokens)
    if example.format in ("suffix", "suffix-shift"):
        return toks[:toks.index(SEP)] if SEP in toks else toks
    if example.format == "prefix":
        return toks[toks.index(SEP) + 1:] if SEP in toks else toks
    return [t for t, f in zip(toks, example.factor_labels) if f != TGT]


def check_reserved(corpus: Corpus, format: str) -> None:
    """Refuse inputs that already contain marker tokens (or ``|`` for factors)."""
    reserved = {SEP, CSEP}
    for pair in corpus:
        for side, words in (("source", pair.source.words), ("target", pair.target.words)):
            bad = reserved.intersection(words)
            if bad:
                raise ReservedTokenError(f"pair {pair.id}: {side} contains reserved token {sorted(bad)[0]}")
            if format == "factored" and side == "source" and any("|" in w for w in words):
                raise ReservedTokenError(f"pair {pair.id}: source token contains '|'")


def check_constraint_tokens(sets: Iterable[ConstraintSet], format: str) -> None:
    for cs in sets:
        for c in cs.constraints:
            for t in c.tokens:
                if t in (SEP, CSEP) or (format == "factored" and "|" in t):
                    raise ReservedTokenError(f"pair {cs.pair_id}: constraint token {t!r} is reserved")


def positions_json(example: AnnotatedExample) -> str:
    return json.dumps({"id": example.pair_id, "pos": list(example.positions)}, separators=(",", ":"))


def write_examples(examples: Sequence[AnnotatedExample], input_path, target_path, positions_path=None) -> None:
    with open(input_path, "w", encoding="utf-8", newline="\n") as fi, \
            open(target_path, "w", encoding="utf-8", newline="\n") as ft:
        for ex in examples:
            fi.write((ex.factored_line if ex.format == "factored" else ex.line) + "\n")
            ft.write(ex.target_line + "\n")
    if positions_path is not None:
        with open(positions_path, "w", encoding="utf-8", newline="\n") as fp:
            for ex in examples:
                fp.write(positions_json(ex) + "\n")
