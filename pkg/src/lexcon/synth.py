"""Training-constraint synthesis: random target spans and dictionary matches.

Stream layout for pair ``p`` under ``cfg.seed`` (see :mod:`lexcon.rng`):

* draw 0 decides skipping (``u < skip_ratio``),
* draw 1 decides the form in ``mixed`` mode (``u < 0.5`` means lemma),
* for target token ``i``, draw ``2 + 2i`` is its start draw and ``3 + 2i`` its
  stop draw. Scanning left to right, a token outside a span opens one when its
  start draw is below ``p_start``; every token inside a span (the opening one
  included) closes it when its stop draw is below ``p_stop``; the sentence end
  closes any open span. Slots the scan does not consult are skipped,
* draws from ``2 + 2n`` on drive one Fisher-Yates pass over the ``k``
  constraints (``i`` from ``k-1`` down to 1, swap with ``floor(u * (i + 1))``).

Dictionary sampling uses draws 0 and 1 the same way and shuffles from draw 2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import rng
from .corpus import SentencePair
from .errors import ConfigError, MissingForm, MissingLemmaLayer
from .lexicon import TermLexicon, find_matches

FORMS = ("surface", "lemma", "canonical")
FORM_MODES = ("surface", "lemma", "canonical", "mixed")
ORIGINS = ("random", "dictionary", "terminology", "external")
SKIP_DRAW, MIX_DRAW, FIRST_DRAW = 0, 1, 2
CHUNK = 2048


@dataclass(slots=True)
class Constraint:
    surface_tokens: tuple[str, ...] = ()
    lemma_tokens: tuple[str, ...] = ()
    emit_form: str = "surface"
    canonical_tokens: tuple[str, ...] | None = None
    target_span: tuple[int, int] | None = None
    source_span: tuple[int, int] | None = None
    origin: str = "random"

    def __post_init__(self):
        if self.surface_tokens and self.lemma_tokens and len(self.surface_tokens) != len(self.lemma_tokens):
            raise ValueError("surface and lemma token lists differ in length")
        if self.emit_form == "canonical" and not self.canonical_tokens:
            raise MissingForm("canonical")

    @property
    def tokens(self) -> tuple[str, ...]:
        """Tokens in this constraint's own emit form."""
        return tuple(realize(self, self.emit_form))

    def with_form(self, form: str) -> Constraint:
        return Constraint(self.surface_tokens, self.lemma_tokens, form, self.canonical_tokens,
                          self.target_span, self.source_span, self.origin)


@dataclass(frozen=True, slots=True)
class ConstraintSet:
    pair_id: int
    constraints: tuple[Constraint, ...] = ()
    skipped: bool = False

    def __post_init__(self):
        if self.skipped and self.constraints:
            raise ValueError("a skipped sentence carries no constraints")


@dataclass(frozen=True)
class SamplerConfig:
    seed: int
    p_start: float = 0.3
    p_stop: float = 0.85
    skip_ratio: float = 0.0
    form_mode: str = "surface"

    def __post_init__(self):
        for name in ("p_start", "p_stop", "skip_ratio"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.form_mode not in FORM_MODES:
            raise ConfigError(f"form_mode must be one of {FORM_MODES}, got {self.form_mode!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")


def realize(constraint: Constraint, form_mode: str, mix_draw: bool = False) -> list[str]:
    if form_mode == "mixed":
        form_mode = "lemma" if mix_draw else "surface"
    if form_mode == "surface":
        tokens = constraint.surface_tokens
    elif form_mode == "lemma":
        tokens = constraint.lemma_tokens
    elif form_mode == "canonical":
        tokens = constraint.canonical_tokens
    else:
        raise ValueError(f"unknown form {form_mode!r}")
    if not tokens:
        raise MissingForm(form_mode)
    return list(tokens)


def _emit_form(cfg: SamplerConfig, mix_u: float) -> str:
    if cfg.form_mode == "mixed":
        return "lemma" if mix_u < 0.5 else "surface"
    return cfg.form_mode


def _shuffle(items: list, u: Sequence[float], pos: int) -> None:
    for i in range(len(items) - 1, 0, -1):
        j = int(u[pos] * (i + 1))
        pos += 1
        items[i], items[j] = items[j], items[i]


def scan_spans(u: Sequence[float], n: int, p_start: float, p_stop: float) -> list[tuple[int, int]]:
    """Sequential replay of the span scan for one stream row."""
    spans = []
    open_at = None
    for i in range(n):
        if open_at is None and u[FIRST_DRAW + 2 * i] < p_start:
            open_at = i
        if open_at is not None and (u[FIRST_DRAW + 2 * i + 1] < p_stop or i == n - 1):
            spans.append((open_at, i + 1))
            open_at = None
    return spans


def _span_table(u: np.ndarray, lengths: np.ndarray, p_start: float, p_stop: float):
    """Vectorized :func:`scan_spans` over a chunk; flat ``(row, start, end)`` arrays, row-major."""
    width = int(lengths.max(initial=0))
    if width == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    idx = np.arange(width)
    valid = idx[None, :] < lengths[:, None]
    opens = (u[:, FIRST_DRAW:FIRST_DRAW + 2 * width:2] < p_start) & valid
    stops = (u[:, FIRST_DRAW + 1:FIRST_DRAW + 2 * width:2] < p_stop) | (idx[None, :] == lengths[:, None] - 1)
    # Token i is inside a span iff some token j <= i opened one and no stop
    # fired on tokens j .. i-1, i.e. the last open follows the last earlier stop.
    last_open = np.maximum.accumulate(np.where(opens, idx, -1), axis=1)
    last_stop = np.maximum.accumulate(np.where(stops, idx, -1), axis=1)
    prev_stop = np.full_like(last_stop, -1)
    prev_stop[:, 1:] = last_stop[:, :-1]
    inside = (last_open > prev_stop) & valid
    carried = np.zeros_like(inside)
    carried[:, 1:] = inside[:, :-1] & ~stops[:, :-1]
    rows, starts = np.nonzero(inside & ~carried)
    _, ends = np.nonzero(inside & stops)
    return rows, starts, ends + 1


def _shuffle_rows(u: np.ndarray, lengths: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    """Vectorized :func:`_shuffle` of every row's span group; returns a flat gather order.

    Step ``t`` performs swap number ``t`` of each row's Fisher-Yates pass at
    once; rows never share elements, so the steps are independent across rows.
    """
    base = bounds[:-1]
    k = np.diff(bounds)
    order = np.arange(bounds[-1])
    first = FIRST_DRAW + 2 * lengths
    for t in range(int(k.max(initial=0)) - 1):
        rows = np.nonzero(k - 1 > t)[0]
        i = k[rows] - 1 - t
        j = (u[rows, first[rows] + t] * (i + 1)).astype(np.int64)
        a, b = base[rows] + i, base[rows] + j
        order[a], order[b] = order[b], order[a].copy()
    return order


def sample_random_many(pairs: Sequence[SentencePair], cfg: SamplerConfig) -> Iterator[ConstraintSet]:
    """Random-span constraint sets for ``pairs``, in order."""
    if cfg.form_mode == "canonical":
        raise ConfigError("random spans have no canonical form; use dictionary sampling")
    for lo in range(0, len(pairs), CHUNK):
        chunk = pairs[lo:lo + CHUNK]
        if cfg.form_mode != "surface":
            for p in chunk:
                if p.target_lemmas is None:
                    raise MissingLemmaLayer("target", p.id)
        lengths = np.fromiter((len(p.target.words) for p in chunk), dtype=np.int64, count=len(chunk))
        u = rng.uniforms(cfg.seed, [p.id for p in chunk], FIRST_DRAW + 3 * int(lengths.max(initial=0)))
        rows, starts, ends = _span_table(u, lengths, cfg.p_start, cfg.p_stop)
        bounds = np.searchsorted(rows, np.arange(len(chunk) + 1))
        order = _shuffle_rows(u, lengths, bounds)
        bounds = bounds.tolist()
        starts, ends = starts[order].tolist(), ends[order].tolist()
        skip = (u[:, SKIP_DRAW] < cfg.skip_ratio).tolist()
        mix = u[:, MIX_DRAW].tolist()
        for r, pair in enumerate(chunk):
            if skip[r]:
                yield ConstraintSet(pair.id, (), True)
                continue
            words, lemmas = pair.target.words, pair.target_lemmas
            form = _emit_form(cfg, mix[r])
            lo_r, hi_r = bounds[r], bounds[r + 1]
            cons = [
                Constraint(words[s:e], lemmas[s:e] if lemmas is not None else (), form, None, (s, e), None, "random")
                for s, e in zip(starts[lo_r:hi_r], ends[lo_r:hi_r])
            ]
            yield ConstraintSet(pair.id, tuple(cons), False)


def sample_random(pair: SentencePair, cfg: SamplerConfig) -> ConstraintSet:
    return next(sample_random_many([pair], cfg))


def sample_dictionary(pair: SentencePair, lexicon: TermLexicon, cfg: SamplerConfig) -> ConstraintSet:
    matches = find_matches(lexicon, pair, require_target=True)
    u = rng.uniforms(cfg.seed, [pair.id], FIRST_DRAW + max(len(matches) - 1, 0))[0].tolist()
    if u[SKIP_DRAW] < cfg.skip_ratio:
        return ConstraintSet(pair.id, (), True)
    form = _emit_form(cfg, u[MIX_DRAW])
    origin = "terminology" if lexicon.mode == "terminology" else "dictionary"
    cons = []
    for m in matches:
        s, e = m.target_span
        cons.append(Constraint(pair.target.words[s:e], pair.target_lemmas[s:e], form,
                               lexicon.entry(m.entry_id).target_tokens, m.target_span, m.source_span, origin))
    _shuffle(cons, u, FIRST_DRAW)
    return ConstraintSet(pair.id, tuple(cons), False)


def sample_dictionary_many(pairs: Iterable[SentencePair], lexicon: TermLexicon,
                           cfg: SamplerConfig) -> Iterator[ConstraintSet]:
    for pair in pairs:
        yield sample_dictionary(pair, lexicon, cfg)


# -- JSON Lines --------------------------------------------------------------

def _span(s):
    return None if s is None else list(s)


def constraint_to_json(c: Constraint) -> dict:
    return {
        "tokens": list(c.tokens),
        "form": c.emit_form,
        "src_span": _span(c.source_span),
        "tgt_span": _span(c.target_span),
        "origin": c.origin,
    }


def set_to_json(cs: ConstraintSet) -> str:
    obj = {"id": cs.pair_id, "skipped": cs.skipped,
           "constraints": [constraint_to_json(c) for c in cs.constraints]}
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def constraint_from_json(obj: dict) -> Constraint:
    tokens = tuple(obj["tokens"])
    form = obj.get("form", "surface")
    span = lambda k: None if obj.get(k) is None else tuple(obj[k])
    kw = {"surface": "surface_tokens", "lemma": "lemma_tokens", "canonical": "canonical_tokens"}
    return Constraint(emit_form=form, target_span=span("tgt_span"), source_span=span("src_span"),
                      origin=obj.get("origin", "external"), **{kw[form]: tokens})


def set_from_json(line: str) -> ConstraintSet:
    obj = json.loads(line)
    return ConstraintSet(obj["id"], tuple(constraint_from_json(c) for c in obj["constraints"]),
                         bool(obj.get("skipped", False)))


def write_sets(path, sets: Iterable[ConstraintSet]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for cs in sets:
            f.write(set_to_json(cs) + "\n")


def read_sets(path) -> list[ConstraintSet]:
    with open(path, encoding="utf-8") as f:
        return [set_from_json(line) for line in f if line.strip()]
