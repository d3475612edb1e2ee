"""MT output scoring: BLEU / BLEU_L, constraint coverage, placement correlation."""

from __future__ import annotations

import json
import math
import re
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Sequence

from . import rng
from .bench import TestCase, TestSet
from .corpus import tokenize
from .errors import LengthMismatch
from .morph import Analyzer, identity
from .synth import Constraint

MAX_ORDER = 4
FORM_MISMATCH = "FORM_MISMATCH"
MISSING = "MISSING"

_13A_RULES = [
    (re.compile(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])"), r" \1 "),
    (re.compile(r"([^0-9])([\.,])"), r"\1 \2 "),
    (re.compile(r"([\.,])([^0-9])"), r" \1 \2"),
    (re.compile(r"([0-9])(-)"), r"\1 \2 "),
]


def tokenize_13a(line: str) -> str:
    """mteval-v13a tokenization as used by SacreBLEU's ``13a``."""
    line = line.replace("<skipped>", "").replace("-\n", "").replace("\n", " ")
    if "&" in line:
        line = line.replace("&quot;", '"').replace("&amp;", "&").replace("&lt;", "<").replace("&gt;", ">")
    line = f" {line} "
    for pattern, repl in _13A_RULES:
        line = pattern.sub(repl, line)
    return " ".join(line.split())


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


@dataclass
class BleuStats:
    correct: list[int]
    total: list[int]
    sys_len: int
    ref_len: int

    @property
    def score(self) -> float:
        """Corpus BLEU in percent with exponential smoothing of zero counts."""
        if not any(self.correct):
            return 0.0
        if self.sys_len == 0:
            return 0.0
        bp = 1.0 if self.sys_len >= self.ref_len else math.exp(1 - self.ref_len / self.sys_len)
        smooth = 1.0
        log_sum = 0.0
        for n in range(MAX_ORDER):
            if self.total[n] == 0:
                return 0.0
            if self.correct[n] == 0:
                smooth *= 2
                p = 1.0 / (smooth * self.total[n])
            else:
                p = self.correct[n] / self.total[n]
            log_sum += math.log(p)
        return 100.0 * bp * math.exp(log_sum / MAX_ORDER)


def bleu_stats(hyps: Sequence[str], refs: Sequence[str], tokenize: bool = True) -> BleuStats:
    if len(hyps) != len(refs):
        raise LengthMismatch(len(hyps), len(refs))
    correct = [0] * MAX_ORDER
    total = [0] * MAX_ORDER
    sys_len = ref_len = 0
    for hyp, ref in zip(hyps, refs):
        h = (tokenize_13a(hyp) if tokenize else hyp).split()
        r = (tokenize_13a(ref) if tokenize else ref).split()
        sys_len += len(h)
        ref_len += len(r)
        for n in range(1, MAX_ORDER + 1):
            hc, rc = _ngrams(h, n), _ngrams(r, n)
            correct[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            total[n - 1] += max(len(h) - n + 1, 0)
    return BleuStats(correct, total, sys_len, ref_len)


def bleu(hyps: Sequence[str], refs: Sequence[str], tokenize: bool = True) -> float:
    if not hyps:
        raise LengthMismatch(0, len(refs))
    return bleu_stats(hyps, refs, tokenize).score


def lemmatize_line(line: str, analyzer: Analyzer) -> str:
    return " ".join(analyzer.normalize_sequence(line.split()))


def bleu_l(hyps: Sequence[str], refs: Sequence[str], analyzer: Analyzer) -> float:
    return bleu([lemmatize_line(h, analyzer) for h in hyps], [lemmatize_line(r, analyzer) for r in refs])


# -- coverage ---------------------------------------------------------------

def occurrences(hay: Sequence[str], needle: Sequence[str]) -> list[int]:
    """Start indices of leftmost non-overlapping occurrences."""
    out = []
    n = len(needle)
    if n == 0:
        return out
    needle = tuple(needle)
    i = 0
    while i <= len(hay) - n:
        if tuple(hay[i:i + n]) == needle:
            out.append(i)
            i += n
        else:
            i += 1
    return out


def _assign(hay: Sequence[str], keys: Sequence[tuple[str, ...] | None]) -> list[int | None]:
    """Token index per constraint; the k-th copy of a key takes its k-th occurrence."""
    occ: dict[tuple[str, ...], list[int]] = {}
    seen: Counter = Counter()
    out: list[int | None] = []
    for key in keys:
        if not key:
            out.append(None)
            continue
        if key not in occ:
            occ[key] = occurrences(hay, key)
        k = seen[key]
        seen[key] += 1
        out.append(occ[key][k] if k < len(occ[key]) else None)
    return out


def lemma_key(c: Constraint, analyzer: Analyzer) -> tuple[str, ...]:
    return tuple(analyzer.normalize_sequence(c.surface_tokens or c.lemma_tokens))


@dataclass
class CaseResult:
    pair_id: int
    satisfied_surface: list[bool]
    satisfied_lemma: list[bool]
    hyp_start_chars: list[int] = field(default_factory=list)
    ref_start_chars: list[int] = field(default_factory=list)
    satisfied_emitted: list[bool] = field(default_factory=list)
    hyp_spans: list[tuple[int, int] | None] = field(default_factory=list)


def score_case(hyp: str, case: TestCase, analyzer: Analyzer) -> CaseResult:
    hyp_words, hyp_starts = tokenize(hyp)
    ref_words, ref_starts = tokenize(case.reference_line)
    surf_keys = [tuple(c.surface_tokens) for c in case.constraints]
    hyp_at = _assign(hyp_words, surf_keys)
    ref_at = _assign(ref_words, surf_keys)
    lemma_at = _assign(analyzer.normalize_sequence(hyp_words), [lemma_key(c, analyzer) for c in case.constraints])
    emitted_at = _assign(hyp_words, [tuple(c.tokens) if (c.surface_tokens or c.lemma_tokens or c.canonical_tokens)
                                     else None for c in case.constraints])
    sat_s = [a is not None for a in hyp_at]
    # A surface hit always counts as a lemma hit.
    sat_l = [s or a is not None for s, a in zip(sat_s, lemma_at)]
    res = CaseResult(case.pair_id, sat_s, sat_l, satisfied_emitted=[a is not None for a in emitted_at])
    for c, h, r in zip(case.constraints, hyp_at, ref_at):
        res.hyp_spans.append(None if h is None else (h, h + len(c.surface_tokens)))
        if h is not None and r is not None:
            res.hyp_start_chars.append(hyp_starts[h])
            res.ref_start_chars.append(ref_starts[r])
    return res


@dataclass
class Coverage:
    cvg: float
    cvg_l: float
    per_case: list[CaseResult]
    total: int
    vacuous: bool
    cvg_emitted: float | None = None


def coverage(hyps: Sequence[str], testset: TestSet | Sequence[TestCase], analyzer: Analyzer | None = None) -> Coverage:
    cases = list(testset)
    if len(hyps) != len(cases):
        raise LengthMismatch(len(hyps), len(cases))
    analyzer = analyzer or identity()
    per_case = [score_case(h, c, analyzer) for h, c in zip(hyps, cases)]
    total = sum(len(r.satisfied_surface) for r in per_case)
    if total == 0:
        return Coverage(1.0, 1.0, per_case, 0, True, 1.0)
    s = sum(sum(r.satisfied_surface) for r in per_case)
    l = sum(sum(r.satisfied_lemma) for r in per_case)
    e = sum(sum(r.satisfied_emitted) for r in per_case)
    return Coverage(s / total, l / total, per_case, total, False, e / total)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    n = len(xs)
    if n < 2:
        return None
    mx, my = sum(xs) / n, sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    if sxx == 0 or syy == 0:
        return None
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    return max(-1.0, min(1.0, sxy / math.sqrt(sxx * syy)))


def placement_rho(per_case: Sequence[CaseResult]) -> float | None:
    xs = [x for r in per_case for x in r.hyp_start_chars]
    ys = [y for r in per_case for y in r.ref_start_chars]
    return pearson(xs, ys)


def relocate(hyp: str, spans: Sequence[tuple[int, int] | None], stream: rng.Stream) -> str:
    """Cut the given token spans out of ``hyp`` and re-insert each at a random boundary."""
    words = hyp.split()
    chunks = sorted(s for s in spans if s is not None)
    if not chunks:
        return hyp
    cut = set()
    for s, e in chunks:
        cut.update(range(s, e))
    rest = [w for i, w in enumerate(words) if i not in cut]
    for s, e in chunks:
        at = stream.below(len(rest) + 1)
        rest[at:at] = words[s:e]
    return " ".join(rest)


def shuffle_hyps(hyps: Sequence[str], testset, seed: int, analyzer: Analyzer | None = None) -> list[str]:
    cov = coverage(hyps, testset, analyzer)
    return [relocate(h, r.hyp_spans, rng.Stream(seed, i)) for i, (h, r) in enumerate(zip(hyps, cov.per_case))]


def shuffle_check(hyps: Sequence[str], testset, seed: int,
                  analyzer: Analyzer | None = None) -> tuple[float | None, float | None]:
    """Placement correlation before and after moving satisfied constraints to random positions."""
    before = placement_rho(coverage(hyps, testset, analyzer).per_case)
    moved = shuffle_hyps(hyps, testset, seed, analyzer)
    after = placement_rho(coverage(moved, testset, analyzer).per_case)
    return before, after


def bucket_misses(per_case: Sequence[CaseResult], hyps: Sequence[str], testset,
                  analyzer: Analyzer | None = None) -> tuple[dict[str, int], list[dict]]:
    """Split surface misses into FORM_MISMATCH (lemma present) and MISSING; build a review queue."""
    buckets = {FORM_MISMATCH: 0, MISSING: 0}
    queue = []
    for res, hyp, case in zip(per_case, hyps, testset):
        for i, c in enumerate(case.constraints):
            if res.satisfied_surface[i]:
                continue
            bucket = FORM_MISMATCH if res.satisfied_lemma[i] else MISSING
            buckets[bucket] += 1
            queue.append({
                "id": case.pair_id, "constraint": i, "bucket": bucket,
                "source": case.source_line, "hyp": hyp, "ref": case.reference_line,
                "surface": list(c.surface_tokens), "lemma": list(c.lemma_tokens),
                "canonical": None if c.canonical_tokens is None else list(c.canonical_tokens),
                "label": None,
            })
    return buckets, queue


@dataclass
class EvalReport:
    bleu: float
    bleu_l: float
    cvg: float
    cvg_l: float
    placement_rho: float | None
    per_case: list[CaseResult]
    miss_buckets: dict[str, int]
    constraints: int = 0
    vacuous: bool = False
    cvg_emitted: float | None = None
    rho_shuffled: float | None = None
    shuffle_checked: bool = False
    review_queue: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "bleu": round(self.bleu, 4), "bleu_l": round(self.bleu_l, 4),
            "cvg": self.cvg, "cvg_l": self.cvg_l, "cvg_emitted": self.cvg_emitted,
            "placement_rho": self.placement_rho, "rho_shuffled": self.rho_shuffled,
            "constraints": self.constraints, "vacuous_coverage": self.vacuous,
            "miss_buckets": self.miss_buckets,
        }

    def to_json(self) -> str:
        obj = self.summary()
        obj["per_case"] = [{k: v for k, v in asdict(r).items() if k != "hyp_spans"} for r in self.per_case]
        return json.dumps(obj, indent=1, ensure_ascii=False)

    def table(self) -> str:
        rho = "n/a" if self.placement_rho is None else f"{self.placement_rho:.4f}"
        head = f"{'BLEU':>7} {'Cvg':>7} {'BLEU_L':>7} {'Cvg_L':>7} {'Pos rho':>8}"
        row = f"{self.bleu:7.2f} {100 * self.cvg:7.2f} {self.bleu_l:7.2f} {100 * self.cvg_l:7.2f} {rho:>8}"
        lines = [head, row]
        if self.shuffle_checked:
            shuffled = "n/a" if self.rho_shuffled is None else f"{self.rho_shuffled:.4f}"
            lines.append(f"shuffled constraints: Pos rho {shuffled}")
        if self.vacuous:
            lines.append("no constraints in test set: coverage reported as 1.0 (vacuous)")
        return "\n".join(lines)


def evaluate(hyps: Sequence[str], testset: TestSet, analyzer: Analyzer | None = None,
             shuffle_seed: int | None = None) -> EvalReport:
    analyzer = analyzer or identity()
    cases = list(testset)
    refs = [c.reference_line for c in cases]
    cov = coverage(hyps, cases, analyzer)
    buckets, queue = bucket_misses(cov.per_case, hyps, cases, analyzer)
    report = EvalReport(
        bleu=bleu(hyps, refs) if hyps else 0.0,
        bleu_l=bleu_l(hyps, refs, analyzer) if hyps else 0.0,
        cvg=cov.cvg, cvg_l=cov.cvg_l,
        placement_rho=placement_rho(cov.per_case),
        per_case=cov.per_case, miss_buckets=buckets,
        constraints=cov.total, vacuous=cov.vacuous, cvg_emitted=cov.cvg_emitted,
        review_queue=queue,
    )
    if shuffle_seed is not None:
        _, report.rho_shuffled = shuffle_check(hyps, cases, shuffle_seed, analyzer)
        report.shuffle_checked = True
    return report


def write_case_table(path, report: EvalReport) -> None:
    """Tab-separated per-case metrics."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("id\tconstraints\tsurface_hits\tlemma_hits\tplaced\n")
        for r in report.per_case:
            f.write(f"{r.pair_id}\t{len(r.satisfied_surface)}\t{sum(r.satisfied_surface)}\t"
                    f"{sum(r.satisfied_lemma)}\t{len(r.hyp_start_chars)}\n")
