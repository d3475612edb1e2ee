"""Lexically constrained beam search with dynamic beam allocation.

Hypotheses are grouped into banks by the number of constraint tokens they have
placed; every step the beam of width ``k`` is split evenly over the
non-empty banks (remainders and unused slots go to higher banks first), so an
arbitrary number of constraints fits in a constant beam.

Constraint progress is tracked on a trie of the constraint sequences. On every
token a hypothesis may keep treating the token as free text, advance its
current partial match, or start a new match from the root; all resulting
states are kept as separate candidates, so overlapping constraint prefixes are
handled without a failure function. Only completed constraints count towards
``tokens_met``, which therefore never decreases.
"""

from __future__ import annotations

import json
import math
import subprocess
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Protocol, Sequence

import numpy as np

from .errors import ConstraintTokenOutOfVocab, EmptyCorpus
from .synth import realize

BOS, EOS, UNK = "<s>", "</s>", "<unk>"
NEG_INF = float("-inf")


class Scorer(Protocol):
    vocab: list[str]
    bos: int
    eos: int

    def score_next(self, prefix: Sequence[int]) -> np.ndarray:
        """Log-probabilities of every vocabulary id following ``prefix``."""
        ...


def scorer_state(scorer, prefix: tuple[int, ...]) -> Hashable:
    """Recombination key: the scorer's own state if it exposes one, else the full prefix."""
    fn = getattr(scorer, "state", None)
    return fn(prefix) if fn is not None else prefix


# -- n-gram language model ----------------------------------------------------

class NGramLM:
    """Interpolated absolute-discounting n-gram model.

    ``p(w | h) = max(c(h w) - d, 0) / c(h) + d * N1+(h .) / c(h) * p(w | h')``
    where ``h'`` drops the oldest context word. Unseen contexts back off
    entirely, and the recursion ends in the uniform distribution over all
    predictable ids (everything but ``<s>``).
    """

    def __init__(self, order: int, discount: float, vocab: list[str], counts: list[dict]):
        self.order = order
        self.discount = discount
        self.vocab = vocab
        self.index = {w: i for i, w in enumerate(vocab)}
        self.bos, self.eos, self.unk = self.index[BOS], self.index[EOS], self.index[UNK]
        # counts[k]: context tuple of length k -> (ids array, counts array, total)
        self.counts = counts
        self._cache: dict[tuple[int, ...], np.ndarray] = {}
        base = np.full(len(vocab), 1.0 / (len(vocab) - 1))
        base[self.bos] = 0.0
        self._base = base

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.index.get(t, self.unk) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.vocab[i] for i in ids]

    def context(self, prefix: Sequence[int]) -> tuple[int, ...]:
        if self.order == 1:
            return ()
        padded = [self.bos] * (self.order - 1) + list(prefix)
        return tuple(padded[-(self.order - 1):])

    def state(self, prefix: Sequence[int]) -> tuple[int, ...]:
        return self.context(prefix)

    def prob_dist(self, context: tuple[int, ...]) -> np.ndarray:
        hit = self._cache.get(context)
        if hit is not None:
            return hit
        p = self._base
        d = self.discount
        for k in range(0, len(context) + 1):
            h = context[len(context) - k:] if k else ()
            entry = self.counts[k].get(h)
            if entry is None:
                continue
            ids, cnt, total = entry
            q = p * (d * len(ids) / total)
            q[ids] += np.maximum(cnt - d, 0.0) / total
            p = q
        self._cache[context] = p
        return p

    def prob(self, word: int, prefix: Sequence[int]) -> float:
        return float(self.prob_dist(self.context(prefix))[word])

    def score_next(self, prefix: Sequence[int]) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.prob_dist(self.context(prefix)))

    def sequence_logprob(self, ids: Sequence[int]) -> float:
        return sum(float(self.score_next(ids[:i])[t]) for i, t in enumerate(ids))


def train_ngram(sentences: Iterable[str | Sequence[str]], n: int = 3, d: float = 0.7,
                extra_vocab: Iterable[str] = ()) -> NGramLM:
    """Train on whitespace-tokenized sentences; ``extra_vocab`` adds unseen words
    that then receive only back-off probability mass."""
    if n < 1:
        raise ValueError("n-gram order must be at least 1")
    if not 0.0 < d < 1.0:
        raise ValueError("discount must lie in (0, 1)")
    toks = [s.split() if isinstance(s, str) else list(s) for s in sentences]
    if not any(toks):
        raise EmptyCorpus("cannot train a language model on an empty corpus")
    words = sorted(({w for sent in toks for w in sent} | set(extra_vocab)) - {BOS, EOS, UNK})
    vocab = [BOS, EOS, UNK] + words
    index = {w: i for i, w in enumerate(vocab)}
    raw: list[dict[tuple[int, ...], Counter]] = [defaultdict(Counter) for _ in range(n)]
    bos, eos = index[BOS], index[EOS]
    for sent in toks:
        ids = [bos] * (n - 1) + [index[w] for w in sent] + [eos]
        for i in range(n - 1, len(ids)):
            for k in range(n):
                raw[k][tuple(ids[i - k:i])][ids[i]] += 1
    counts = []
    for k in range(n):
        table = {}
        for h, c in raw[k].items():
            ids = np.array(sorted(c), dtype=np.int64)
            cnt = np.array([c[i] for i in ids], dtype=np.float64)
            table[h] = (ids, cnt, float(cnt.sum()))
        counts.append(table)
    return NGramLM(n, d, vocab, counts)


class ExternalScorer:
    """Scorer backed by a subprocess speaking JSON lines on stdin/stdout.

    Request ``{"prefix": [ids]}``, response ``{"logprobs": {"id": lp, ...}}``;
    ids missing from the response get ``-inf``.
    """

    def __init__(self, command: Sequence[str], vocab: list[str], bos: int = 0, eos: int = 1):
        self.vocab = vocab
        self.index = {w: i for i, w in enumerate(vocab)}
        self.bos, self.eos = bos, eos
        self._proc = subprocess.Popen(list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                      text=True, encoding="utf-8", bufsize=1)

    def score_next(self, prefix: Sequence[int]) -> np.ndarray:
        self._proc.stdin.write(json.dumps({"prefix": list(map(int, prefix))}) + "\n")
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise RuntimeError("external scorer closed its output")
        out = np.full(len(self.vocab), NEG_INF)
        for k, v in json.loads(line)["logprobs"].items():
            out[int(k)] = float(v)
        return out

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- constraint tracking --------------------------------------------------------

@dataclass(frozen=True, slots=True)
class ConstraintState:
    remaining: tuple[int, ...]
    node: int
    tokens_met: int
    partial: int = 0  # tokens matched so far of the constraint in progress

    @property
    def bank(self) -> int:
        return self.tokens_met + self.partial


class ConstraintTrie:
    """Trie over the distinct constraint sequences; states are hashable values."""

    def __init__(self, constraints: Sequence[Sequence[int]]):
        distinct: list[tuple[int, ...]] = []
        counts: Counter = Counter()
        for c in constraints:
            c = tuple(c)
            if not c:
                continue
            if c not in counts:
                distinct.append(c)
            counts[c] += 1
        self.sequences = distinct
        self.total = sum(len(c) * counts[c] for c in distinct)
        self.children: list[dict[int, int]] = [{}]
        self.terminal: list[int | None] = [None]
        self.depth = [0]
        self.below: list[set[int]] = [set()]
        for ci, seq in enumerate(distinct):
            node = 0
            self.below[0].add(ci)
            for t in seq:
                nxt = self.children[node].get(t)
                if nxt is None:
                    nxt = len(self.children)
                    self.children[node][t] = nxt
                    self.children.append({})
                    self.terminal.append(None)
                    self.depth.append(self.depth[node] + 1)
                    self.below.append(set())
                node = nxt
                self.below[node].add(ci)
            self.terminal[node] = ci
        self.initial = ConstraintState(tuple(counts[c] for c in distinct), 0, 0)

    def _viable(self, node: int, remaining: tuple[int, ...], beyond: bool) -> bool:
        d = self.depth[node]
        return any(remaining[ci] and (not beyond or len(self.sequences[ci]) > d) for ci in self.below[node])

    def advancing(self, state: ConstraintState) -> set[int]:
        """Tokens that extend a partial match or start a new one."""
        out = set()
        for base in {state.node, 0}:
            for t, child in self.children[base].items():
                if self._viable(child, state.remaining, beyond=False):
                    out.add(t)
        return out

    def successors(self, state: ConstraintState, token: int) -> list[ConstraintState]:
        rem = state.remaining
        out = {ConstraintState(rem, 0, state.tokens_met)}
        for base in {state.node, 0}:
            child = self.children[base].get(token)
            if child is None:
                continue
            ci = self.terminal[child]
            if ci is not None and rem[ci]:
                done = rem[:ci] + (rem[ci] - 1,) + rem[ci + 1:]
                out.add(ConstraintState(done, 0, state.tokens_met + len(self.sequences[ci])))
            if self._viable(child, rem, beyond=True):
                out.add(ConstraintState(rem, child, state.tokens_met, self.depth[child]))
        if any(s.node for s in out):
            # A partial match can always fall back to the root, so it dominates the free reading.
            out.discard(ConstraintState(rem, 0, state.tokens_met))
        return sorted(out, key=lambda s: (s.tokens_met, s.node, s.remaining))


@dataclass
class Hypothesis:
    tokens: tuple[int, ...]
    logprob: float
    cstate: ConstraintState | None = None
    finished: bool = False
    satisfied: bool = True

    def sort_key(self):
        return (-self.logprob, self.tokens)


def _better(a: Hypothesis, b: Hypothesis | None) -> bool:
    return b is None or a.sort_key() < b.sort_key()


def _top_tokens(lp: np.ndarray, k: int, exclude: int) -> list[int]:
    order = np.argsort(-lp, kind="stable")
    return [int(t) for t in order[:k + 1] if t != exclude][:k]


def beam_search(scorer: Scorer, k: int, max_len: int, recombine: bool = True) -> Hypothesis:
    """Unconstrained beam search: top-``k`` continuations per hypothesis, ``k`` survivors per step."""
    beam = [Hypothesis((), 0.0)]
    best: Hypothesis | None = None
    for _ in range(max_len):
        pool: dict = {}
        for h in beam:
            lp = scorer.score_next(h.tokens)
            for t in _top_tokens(lp, k, scorer.bos):
                if lp[t] == NEG_INF:
                    continue
                cand = Hypothesis(h.tokens + (t,), h.logprob + float(lp[t]))
                if t == scorer.eos:
                    cand.finished = True
                    if _better(cand, best):
                        best = cand
                    continue
                if len(cand.tokens) + 1 > max_len:
                    continue  # no room left for eos
                key = scorer_state(scorer, cand.tokens) if recombine else cand.tokens
                if _better(cand, pool.get(key)):
                    pool[key] = cand
        if not pool:
            break
        beam = sorted(pool.values(), key=Hypothesis.sort_key)[:k]
        if best is not None and best.logprob >= beam[0].logprob:
            break
    if best is not None:
        return best
    partial = beam[0]
    partial.satisfied = False
    return partial


def allocate(candidates: Iterable[Hypothesis], k: int) -> list[Hypothesis]:
    """Split ``k`` slots over non-empty banks; remainders and unused slots favour higher banks.

    A hypothesis sits in the bank of constraint tokens it has placed, counting
    the tokens of a constraint it is in the middle of.
    """
    banks: dict[int, list[Hypothesis]] = defaultdict(list)
    for h in candidates:
        banks[h.cstate.bank].append(h)
    if not banks:
        return []
    order = sorted(banks, reverse=True)
    for b in order:
        banks[b].sort(key=Hypothesis.sort_key)
    base, rem = divmod(k, len(order))
    quota = {b: base + (i < rem) for i, b in enumerate(order)}
    taken = {b: min(quota[b], len(banks[b])) for b in order}
    spare = k - sum(taken.values())
    for b in order:
        if spare <= 0:
            break
        extra = min(spare, len(banks[b]) - taken[b])
        taken[b] += extra
        spare -= extra
    out = []
    for b in order:
        out.extend(banks[b][:taken[b]])
    return out


def _dominates(a: ConstraintState, b: ConstraintState) -> bool:
    # a can mirror any continuation of b: it owes no more constraints and is at least as far along.
    return b.node in (0, a.node) and all(x <= y for x, y in zip(a.remaining, b.remaining))


def _prune_dominated(pool: dict) -> list[Hypothesis]:
    groups: dict = defaultdict(list)
    for (state_key, _), h in pool.items():
        groups[state_key].append(h)
    out = []
    for hyps in groups.values():
        kept: list[Hypothesis] = []
        for h in sorted(hyps, key=lambda h: (h.sort_key(), -h.cstate.tokens_met, -h.cstate.bank)):
            if not any(_dominates(g.cstate, h.cstate) for g in kept):
                kept.append(h)
        out.extend(kept)
    return out


def constrained_beam_search(scorer: Scorer, constraints: Sequence[Sequence[int]], k: int, max_len: int,
                            recombine: bool = True) -> Hypothesis:
    """Best finished hypothesis containing every constraint (as disjoint contiguous runs).

    ``max_len`` bounds the number of generated tokens including ``eos``. When
    nothing satisfies the constraints in time the best partial hypothesis is
    returned with ``satisfied=False``.
    """
    n_vocab = len(scorer.vocab)
    for c in constraints:
        for t in c:
            if not 0 <= t < n_vocab or t in (scorer.bos, scorer.eos):
                raise ConstraintTokenOutOfVocab(t)
    trie = ConstraintTrie(constraints)
    beam = [Hypothesis((), 0.0, trie.initial)]
    best: Hypothesis | None = None
    for _ in range(max_len):
        pool: dict = {}
        for h in beam:
            lp = scorer.score_next(h.tokens)
            tokens = set(_top_tokens(lp, k, scorer.bos)) | trie.advancing(h.cstate)
            for t in sorted(tokens):
                if lp[t] == NEG_INF:
                    continue
                score = h.logprob + float(lp[t])
                seq = h.tokens + (t,)
                if t == scorer.eos:
                    if h.cstate.tokens_met == trie.total:
                        cand = Hypothesis(seq, score, h.cstate, finished=True)
                        if _better(cand, best):
                            best = cand
                    continue
                state_key = scorer_state(scorer, seq) if recombine else seq
                for cs in trie.successors(h.cstate, t):
                    # Drop states that cannot fit their outstanding constraints plus eos.
                    if len(seq) + trie.total - cs.bank + 1 > max_len:
                        continue
                    cand = Hypothesis(seq, score, cs)
                    key = (state_key, cs)
                    if _better(cand, pool.get(key)):
                        pool[key] = cand
        if not pool:
            break
        beam = allocate(_prune_dominated(pool), k)
        # Scores only decrease, so nothing in the beam can overtake a finished hypothesis.
        if best is not None and best.logprob >= max(h.logprob for h in beam):
            break
    if best is not None:
        return best
    partial = min(beam, key=lambda h: (-h.cstate.tokens_met, -h.cstate.bank, -h.logprob, h.tokens))
    partial.satisfied = False
    return partial


def strip_eos(scorer: Scorer, tokens: Sequence[int]) -> list[int]:
    return [t for t in tokens if t != scorer.eos]


def encode_constraint(scorer: Scorer, tokens: Sequence[str]) -> list[int]:
    index = getattr(scorer, "index", None) or {w: i for i, w in enumerate(scorer.vocab)}
    ids = []
    for t in tokens:
        if t not in index:
            raise ConstraintTokenOutOfVocab(t)
        ids.append(index[t])
    return ids


def decode_corpus(scorer: Scorer, testset, emit_form: str = "surface", k: int = 8,
                  max_len: int = 40) -> list[str]:
    """Decode every case with its constraints realized in ``emit_form``; one line per case."""
    out = []
    for case in testset:
        cons = [encode_constraint(scorer, realize(c, emit_form)) for c in case.constraints]
        need = sum(len(c) for c in cons) + 1
        hyp = constrained_beam_search(scorer, cons, k, max(max_len, need))
        out.append(" ".join(scorer.vocab[t] for t in strip_eos(scorer, hyp.tokens)))
    return out
