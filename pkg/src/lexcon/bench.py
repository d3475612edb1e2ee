"""Evaluation-set builders: oracle, terminology (same/diff) and rare words."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from . import rng
from .corpus import Corpus, SentencePair, normalize_line
from .errors import ConfigError, MissingLemmaLayer, NoReferenceVariant
from .lexicon import TermLexicon, find_matches, find_subsequence
from .synth import Constraint

log = logging.getLogger(__name__)

POLICIES = ("reference", "random", "none")
TRIVIAL_RULE = "source key == target key, or a one-token key of <= 2 characters"


@dataclass
class TestCase:
    __test__ = False  # not a pytest class

    pair_id: int
    source_line: str
    reference_line: str
    constraints: list[Constraint] = field(default_factory=list)
    constraint_tags: list[str | None] = field(default_factory=list)
    split_tag: str | None = None
    chosen_policy: str | None = None

    def to_json(self) -> str:
        cons = []
        for c, tag in zip(self.constraints, self.constraint_tags or [None] * len(self.constraints)):
            cons.append({
                "surface": list(c.surface_tokens),
                "lemma": list(c.lemma_tokens),
                "canonical": None if c.canonical_tokens is None else list(c.canonical_tokens),
                "form": c.emit_form,
                "src_span": None if c.source_span is None else list(c.source_span),
                "tgt_span": None if c.target_span is None else list(c.target_span),
                "origin": c.origin,
                "split": tag,
            })
        obj = {"id": self.pair_id, "source": self.source_line, "reference": self.reference_line,
               "constraints": cons, "split": self.split_tag, "policy": self.chosen_policy}
        return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> TestCase:
        obj = json.loads(line)
        cons, tags = [], []
        for c in obj["constraints"]:
            span = lambda k: None if c.get(k) is None else tuple(c[k])
            cons.append(Constraint(tuple(c.get("surface") or ()), tuple(c.get("lemma") or ()),
                                   c.get("form", "surface"),
                                   None if c.get("canonical") is None else tuple(c["canonical"]),
                                   span("tgt_span"), span("src_span"), c.get("origin", "external")))
            tags.append(c.get("split"))
        return cls(obj["id"], obj["source"], obj["reference"], cons, tags, obj.get("split"), obj.get("policy"))


@dataclass
class TestSet:
    __test__ = False

    cases: list[TestCase]
    manifest: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.cases)

    def __iter__(self):
        return iter(self.cases)

    def write(self, path, manifest_path=None) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for case in self.cases:
                f.write(case.to_json() + "\n")
        manifest_path = manifest_path or Path(str(path) + ".manifest.json")
        Path(manifest_path).write_text(json.dumps(self.manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                                       encoding="utf-8")

    @classmethod
    def read(cls, path, manifest_path=None) -> TestSet:
        with open(path, encoding="utf-8") as f:
            cases = [TestCase.from_json(line) for line in f if line.strip()]
        manifest_path = Path(manifest_path or str(path) + ".manifest.json")
        manifest = json.loads(manifest_path.read_text(encoding="utf-8")) if manifest_path.exists() else {}
        return cls(cases, manifest)


def _matched_constraint(pair: SentencePair, lexicon: TermLexicon, m, origin: str) -> Constraint:
    s, e = m.target_span
    return Constraint(pair.target.words[s:e], pair.target_lemmas[s:e], "surface",
                      lexicon.entry(m.entry_id).target_tokens, m.target_span, m.source_span, origin)


def split_of(c: Constraint) -> str:
    return "same" if tuple(c.surface_tokens) == tuple(c.canonical_tokens or ()) else "diff"


def _lexicon_manifest(lexicon: TermLexicon) -> dict:
    return {"lexicon": lexicon.provenance, "lexicon_entries": len(lexicon),
            "lexicon_mode": lexicon.mode, "dropped_trivial": lexicon.dropped_trivial,
            "trivial_rule": TRIVIAL_RULE}


def build_oracle(corpus: Corpus, lexicon: TermLexicon) -> TestSet:
    """One case per pair with at least one bilingual dictionary match."""
    cases = []
    for pair in corpus:
        matches = find_matches(lexicon, pair, require_target=True)
        if matches:
            cons = [_matched_constraint(pair, lexicon, m, "dictionary") for m in matches]
            cases.append(TestCase(pair.id, pair.source.raw, pair.target.raw, cons, [None] * len(cons)))
    manifest = {"kind": "oracle", "cases": len(cases), **_lexicon_manifest(lexicon)}
    return TestSet(cases, manifest)


def build_terminology(corpus: Corpus, termbase: TermLexicon, cap_per_term: int = 10) -> TestSet:
    """Scan in corpus order admitting at most ``cap_per_term`` pairs per source term.

    A pair contributes constraints only for terms still under their cap; it is
    admitted when at least one such term remains. Each constraint is tagged
    ``same`` when the reference realizes it exactly in the termbase form; the
    case is ``diff`` if any of its constraints is.
    """
    if cap_per_term < 0:
        raise ConfigError("cap_per_term must be non-negative")
    admitted: Counter = Counter()
    cases = []
    for pair in corpus:
        matches = [m for m in find_matches(termbase, pair, require_target=True)
                   if admitted[termbase.entry(m.entry_id).source_key] < cap_per_term]
        if not matches:
            continue
        cons, tags = [], []
        for m in matches:
            c = _matched_constraint(pair, termbase, m, "terminology")
            cons.append(c)
            tags.append(split_of(c))
        # Count each term once per admitted pair.
        for key in {termbase.entry(m.entry_id).source_key for m in matches}:
            admitted[key] += 1
        cases.append(TestCase(pair.id, pair.source.raw, pair.target.raw, cons, tags,
                              "diff" if "diff" in tags else "same"))
    tag_counts = Counter(t for c in cases for t in c.constraint_tags)
    manifest = {"kind": "terminology", "cap_per_term": cap_per_term, "cases": len(cases),
                "terms_covered": len(admitted), "constraint_splits": dict(sorted(tag_counts.items())),
                "case_splits": dict(sorted(Counter(c.split_tag for c in cases).items())),
                **_lexicon_manifest(termbase)}
    return TestSet(cases, manifest)


def build_rare(corpus_freqs: Mapping[int, int], lexicon: TermLexicon, eval_corpus: Corpus,
               max_freq: int = 50, policy: str = "reference", seed: int = 0,
               require_target: bool = True) -> TestSet:
    """Cases for source terms seen at most ``max_freq`` times in training data.

    With ``require_target`` a pair is used only if some translation variant of
    the term occurs in the reference lemmas. ``policy`` picks the constraint:
    the in-reference variant, a uniform draw over all variants (stream keyed by
    pair id; draw ``t`` serves the pair's ``t``-th term) or nothing.
    Constraints are emitted in lemma form.
    """
    if policy not in POLICIES:
        raise ConfigError(f"policy must be one of {POLICIES}")
    rare = lexicon.restrict(i for i, n in corpus_freqs.items() if n <= max_freq)
    cases = []
    n_variants = []
    for pair in eval_corpus:
        matches = find_matches(rare, pair, require_target=False)
        if not matches:
            continue
        tgt = pair.target_lemmas
        if tgt is None:
            raise MissingLemmaLayer("target", pair.id)
        used: set[int] = set()
        picked = []
        for m in matches:
            variants = rare.variants(rare.entry(m.entry_id).source_key)
            in_ref = None
            for v in variants:
                at = find_subsequence(tgt, v.target_key, used)
                if at >= 0:
                    in_ref = (v, (at, at + len(v.target_key)))
                    break
            if in_ref is None and require_target:
                continue
            if in_ref is not None:
                used.update(range(*in_ref[1]))
            picked.append((m, variants, in_ref))
        if not picked:
            continue
        draws = rng.uniforms(seed, [pair.id], len(picked))[0].tolist() if policy == "random" else []
        cons = []
        for t, (m, variants, in_ref) in enumerate(picked):
            n_variants.append(len(variants))
            if policy == "none":
                continue
            if policy == "reference":
                if in_ref is None:
                    raise NoReferenceVariant(pair.id, " ".join(variants[0].source_tokens))
                chosen = in_ref[0]
            else:
                chosen = variants[min(int(draws[t] * len(variants)), len(variants) - 1)]
            surface, span = (), None
            if in_ref is not None and in_ref[0] is chosen:
                span = in_ref[1]
                surface = pair.target.words[span[0]:span[1]]
            cons.append(Constraint(surface, chosen.target_key, "lemma", chosen.target_tokens,
                                   span, m.source_span, "dictionary"))
        cases.append(TestCase(pair.id, pair.source.raw, pair.target.raw, cons, [None] * len(cons),
                              None, policy))
    manifest = {"kind": "rare", "max_freq": max_freq, "policy": policy, "seed": seed,
                "require_target": require_target, "rare_entries": len(rare), "cases": len(cases),
                "mean_variants": (sum(n_variants) / len(n_variants)) if n_variants else None,
                **_lexicon_manifest(lexicon)}
    return TestSet(cases, manifest)


def emit_exclusion(testset: TestSet | Iterable[TestCase]) -> set[str]:
    return {normalize_line(case.reference_line) for case in testset}


def write_exclusion(path, lines: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in sorted(lines):
            f.write(line + "\n")
