"""End-to-end acceptance checks; each prints one PASS/FAIL line (collected in the run summary)."""

import json
import math
import random
import time
from collections import Counter

import pytest

from conftest import RUNNING_SRC, RUNNING_SRC_LEMMAS, RUNNING_TGT, RUNNING_TGT_LEMMAS, con, verdict
from oracles import brute_terminology, oracle_agreement, planted_corpus, random_instance, termbase
from lexcon.assemble import FORMATS, assemble, assemble_factored, strip
from lexcon.bench import TestCase, build_rare, build_terminology, emit_exclusion
from lexcon.cli import main
from lexcon.corpus import Corpus, SentencePair, exclude
from lexcon.decode import beam_search, constrained_beam_search, decode_corpus, train_ngram
from lexcon.evaluate import bleu, coverage, pearson, shuffle_check
from lexcon.lexicon import lexicon_from_terms, term_frequencies
from lexcon.morph import table_from_corpus, table_from_pairs
from lexcon.synth import ConstraintSet, SamplerConfig, sample_dictionary, sample_random_many

WORDS = [f"w{i}" for i in range(2000)]


def synthetic_pairs(n, seed, mean_len=20):
    r = random.Random(seed)
    pairs = []
    for i in range(n):
        m = max(1, min(2 * mean_len - 1, int(r.gauss(mean_len, 5))))
        src = " ".join(r.choices(WORDS, k=m))
        tgt = " ".join(r.choices(WORDS, k=m))
        pairs.append(SentencePair.from_text(i, src, tgt))
    return pairs


def span_rates(pairs, sets):
    """Empirical start rate over start opportunities and stop rate over unforced stop decisions."""
    starts = opportunities = stops = decisions = 0
    for pair, cs in zip(pairs, sets):
        if cs.skipped:
            continue
        n = len(pair.target.words)
        spans = [c.target_span for c in cs.constraints]
        starts += len(spans)
        opportunities += n - sum(e - s - 1 for s, e in spans)
        for s, e in spans:
            forced_end = e == n
            decisions += (e - s) - forced_end
            stops += not forced_end
    return starts / opportunities, stops / decisions


def test_criterion_1_sampler_statistics():
    pairs = synthetic_pairs(10_000, seed=1)
    tokens = sum(len(p.target.words) for p in pairs)
    t0 = time.perf_counter()
    sets = list(sample_random_many(pairs, SamplerConfig(seed=11)))
    half = list(sample_random_many(pairs, SamplerConfig(seed=11, skip_ratio=0.5)))
    elapsed = time.perf_counter() - t0
    start, stop = span_rates(pairs, sets)
    skipped = sum(cs.skipped for cs in half) / len(half)
    ok = (tokens >= 100_000 and abs(start - 0.30) <= 0.01 and abs(stop - 0.85) <= 0.01
          and abs(skipped - 0.50) <= 0.02 and elapsed < 10)
    verdict(1, "sampler statistics", ok,
            f"tokens={tokens} start={start:.4f} stop={stop:.4f} skipped={skipped:.4f} time={elapsed:.2f}s")
    assert ok


def random_case(r, i):
    n = r.randint(1, 25)
    src = r.choices(["a", "b", "Cena", "obcích", "x-y", "3,5", "."], k=n)
    pair = SentencePair.from_text(i, " ".join(src), " ".join(r.choices(["t", "u", "v"], k=r.randint(1, 9))))
    free = list(range(n))
    cons = []
    for _ in range(r.randint(0, 3)):
        if not free:
            break
        s = r.choice(free)
        e = s + 1
        while e < n and e in free and r.random() < 0.3:
            e += 1
        free = [j for j in free if not s <= j < e]
        surf = r.choices(["obec", "plánovat", "Zvýšení cen"], k=1)[0]
        cons.append(con(surf, surf.lower(), src=(s, e), origin="dictionary"))
    return pair, ConstraintSet(i, tuple(cons), r.random() < 0.1 and not cons)


def test_criterion_2_format_round_trip():
    r = random.Random(2)
    total = exact = 0
    shift_ok = True
    for i in range(1000):
        pair, cs = random_case(r, i)
        for fmt in FORMATS:
            ex = assemble(pair, cs, fmt)
            total += 1
            exact += strip(ex) == list(pair.source.words)
            if fmt == "suffix-shift" and cs.constraints:
                sep = len(pair.source.words)
                shift_ok &= ex.positions[:sep] == tuple(range(sep)) and ex.positions[sep] == 1024
    ok = exact == total and shift_ok
    verdict(2, "format round trip", ok, f"{exact}/{total} exact, shift start 1024: {shift_ok}")
    assert ok


def test_criterion_3_running_example():
    pair = SentencePair.from_text(0, RUNNING_SRC, RUNNING_TGT, RUNNING_SRC_LEMMAS.split(), RUNNING_TGT_LEMMAS.split())
    corpus = Corpus((pair,))
    lex = lexicon_from_terms([("planned", "plánovat"), ("municipalities", "obec")],
                             table_from_corpus(corpus, "source"), table_from_corpus(corpus, "target"))
    orders = set()
    lemma_ok = factored_ok = True
    for seed in range(20):
        cs = sample_dictionary(pair, lex, SamplerConfig(seed))
        line = assemble(pair, cs, "suffix").line
        orders.add(line)
        lemma_line = assemble(pair, sample_dictionary(pair, lex, SamplerConfig(seed, form_mode="lemma")), "suffix").line
        lemma_ok &= set(lemma_line.split("<sep>")[1].split()) == {"plánovat", "<c>", "obec"}
        labels = " ".join(assemble_factored(pair, cs).factor_labels)
        factored_ok &= labels == "O O O SRC TGT O O O SRC TGT O"
    accepted = {RUNNING_SRC + " <sep> plánováno <c> obcích", RUNNING_SRC + " <sep> obcích <c> plánováno"}
    ok = orders <= accepted and lemma_ok and factored_ok
    verdict(3, "running example", ok, f"{len(orders)} constraint order(s) seen over 20 seeds")
    assert ok


def hand_bleu_micro():
    # hyps/refs below; counts worked out by hand
    # 1-grams 5+4+4 of 6+4+4, 2-grams 3+2+3 of 5+3+3, 3-grams 2+1+2 of 4+2+2, 4-grams 1+0+1 of 3+1+1
    precisions = [13 / 14, 8 / 11, 5 / 8, 2 / 5]
    bp = math.exp(1 - 15 / 14)  # hypothesis 14 tokens, reference 15
    return 100 * bp * math.exp(sum(math.log(p) for p in precisions) / 4)


def test_criterion_4_metric_oracles():
    hyps = ["the cat sat on the mat", "a dog ran far", "it is raining now"]
    refs = ["the cat sat on a mat", "a dog ran very far", "it is raining now"]
    micro = bleu(hyps, refs)
    ident = bleu(refs, refs)
    an = table_from_pairs([("radikálnější", "radikální"), ("radikální", "radikální")])
    fig = coverage(["návrh je radikálnější"], [TestCase(0, "s", "návrh je radikální", [con("radikální", "radikální")])], an)
    fig_ok = fig.per_case[0].satisfied_surface == [False] and fig.per_case[0].satisfied_lemma == [True]
    r = random.Random(4)
    violations = 0
    forms = [f"f{i}" for i in range(30)]
    for _ in range(1000):
        table = table_from_pairs([(f, f"l{r.randrange(8)}") for f in forms])
        cases, outs = [], []
        for i in range(r.randint(1, 5)):
            ref = r.choices(forms, k=r.randint(1, 10))
            picks = [ref[j:j + r.randint(1, 2)] for j in r.sample(range(len(ref)), min(len(ref), r.randint(0, 3)))]
            cases.append(TestCase(i, "s", " ".join(ref), [con(p, table.normalize_sequence(p)) for p in picks]))
            outs.append(" ".join(r.choices(forms, k=r.randint(0, 10))))
        cov = coverage(outs, cases, table)
        violations += cov.cvg > cov.cvg_l
    ok = ident == 100.0 and abs(micro - hand_bleu_micro()) < 1e-4 and fig_ok and violations == 0
    verdict(4, "metric oracles", ok,
            f"bleu(h,h)={ident} micro={micro:.6f} hand={hand_bleu_micro():.6f} radikální={fig_ok} violations={violations}")
    assert ok


def aligned_set(r, n=60):
    hyps, cases = [], []
    for i in range(n):
        words = r.choices(WORDS[:50], k=r.randint(8, 25))
        at = r.randrange(len(words))
        words[at] = "TERM"
        line = " ".join(words)
        hyps.append(line)
        cases.append(TestCase(i, "s", line, [con("TERM")]))
    return hyps, cases


def test_criterion_5_placement():
    exact = pearson([0, 7, 19, 30, 4], [0, 7, 19, 30, 4])
    r = random.Random(5)
    drops = []
    for seed in range(100):
        hyps, cases = aligned_set(r)
        before, after = shuffle_check(hyps, cases, seed)
        drops.append(before - (after if after is not None else 0.0))
    share = sum(d >= 0.3 for d in drops) / len(drops)
    ok = exact == 1.0 and share >= 0.95
    verdict(5, "placement", ok, f"rho(identical)={exact} runs with drop>=0.3: {share:.2%}, "
                                f"median drop {sorted(drops)[50]:.3f}")
    assert ok


def test_criterion_6_terminology_builder():
    corpus = planted_corpus(1500, seed=6)
    ts = build_terminology(corpus, termbase(), cap_per_term=10)
    per_term = Counter(key for c in ts for key in {tuple(x.lemma_tokens) for x in c.constraints})
    got = [(c.pair_id, sorted(c.constraint_tags)) for c in ts]
    want = brute_terminology(corpus, 10)
    left = exclude(corpus, emit_exclusion(ts))
    removed_exactly = {p.id for p in left} == {p.id for p in corpus} - {c.pair_id for c in ts}
    ok = max(per_term.values()) <= 10 and got == want and removed_exactly
    verdict(6, "terminology builder", ok,
            f"{len(ts)} cases, max per term {max(per_term.values())}, brute-force agreement {got == want}, "
            f"exclusion exact {removed_exactly}")
    assert ok


def test_criterion_7_rare_builder():
    stats = pytest.importorskip("scipy.stats")
    planted = {"alpha": 0, "beta": 10, "gamma": 49, "delta": 50, "epsilon": 51, "zeta": 80, "eta": 200}
    terms = [(w, f"{w}-cz") for w in planted] + [("omega", "varianta"), ("omega", "jiná"), ("omega", "třetí")]
    lex = lexicon_from_terms(terms)
    train = []
    for w, f in planted.items():
        train += [SentencePair.from_text(len(train), w, "x", [w], ["x"]) for _ in range(f)]
    train += [SentencePair.from_text(len(train), "omega", "x", ["omega"], ["x"]) for _ in range(5)]
    freqs = term_frequencies(lex, Corpus(tuple(train)))
    ev = [SentencePair.from_text(i, w, f"{w}-cz", [w], [f"{w}-cz"]) for i, w in enumerate(planted)]
    ev.append(SentencePair.from_text(len(ev), "omega", "jiné slovo", ["omega"], ["jiná", "slovo"]))
    ts = build_rare(freqs, lex, Corpus(tuple(ev)), max_freq=50, policy="reference")
    admitted = {ev[c.pair_id].source.words[0] for c in ts}
    frequency_ok = admitted == {w for w, f in planted.items() if f <= 50} | {"omega"}
    omega = next(c for c in ts if ev[c.pair_id].source.words[0] == "omega")
    reference_ok = omega.constraints[0].lemma_tokens == ("jiná",)
    draws = [SentencePair.from_text(i, "omega", "jiné", ["omega"], ["jiná"]) for i in range(10_000)]
    rand = build_rare(freqs, lex, Corpus(tuple(draws)), max_freq=50, policy="random", seed=7)
    counts = Counter(c.constraints[0].lemma_tokens for c in rand)
    p = stats.chisquare(list(counts.values())).pvalue
    ok = frequency_ok and reference_ok and len(counts) == 3 and p > 0.01
    verdict(7, "rare-word builder", ok, f"admitted={sorted(admitted)} reference pick ok={reference_ok} "
                                        f"random counts={sorted(counts.values())} chi2 p={p:.3f}")
    assert ok


def canonical_cases(n, seed):
    r = random.Random(seed)
    terms = [("návrh", "návrhu"), ("směrnice", "směrnici"), ("radikální", "radikálnější"), ("obec", "obcích"),
             ("členský stát", "členských států")]
    cases = []
    for i in range(n):
        picks = r.sample(terms, r.randint(1, 3))
        ref = r.choices(["to", "je", "podle", "pro", "a"], k=r.randint(2, 6)) + [w for _, s in picks for w in s.split()]
        r.shuffle(ref)
        cases.append(TestCase(i, "s", " ".join(ref), [con(s, c, c, form="canonical") for c, s in picks]))
    return cases


def test_criterion_8_constrained_decoder():
    misses = oracle_agreement(500, 8, seed=0)
    r = random.Random(8)
    same = 0
    for _ in range(500):
        lm, _, max_len = random_instance(r)
        k = r.randint(1, 12)
        same += beam_search(lm, k, max_len).tokens == constrained_beam_search(lm, [], k, max_len).tokens
    cases = canonical_cases(200, seed=8)
    lm = train_ngram([c.reference_line for c in cases], n=3,
                     extra_vocab={w for c in cases for x in c.constraints for w in x.canonical_tokens})
    out = decode_corpus(lm, cases, "canonical", k=8, max_len=20)
    contained = sum(all(" ".join(x.canonical_tokens) in f" {line} " or
                        f" {' '.join(x.canonical_tokens)} " in f" {line} " for x in c.constraints)
                    for line, c in zip(out, cases))
    ok = not misses and same == 500 and contained == 200
    verdict(8, "constrained decoder", ok, f"oracle-optimal {500 - len(misses)}/500 at k=8, "
                                          f"zero-constraint identical {same}/500, canonical containment {contained}/200")
    assert ok


def run_pipeline(d, data, workers):
    d.mkdir()
    common = ["--src", str(data / "src.txt"), "--tgt", str(data / "tgt.txt"), "--seed", "9", "--workers", str(workers)]
    codes = [
        main(["synth", *common, "--skip-ratio", "0.5", "-o", str(d / "c.jsonl")]),
        main(["synth", *common, "--sampler", "dict", "--lexicon", str(data / "lex.tsv"), "-o", str(d / "dc.jsonl")]),
        main(["assemble", *common, "--constraints", str(d / "c.jsonl"), "--format", "suffix-shift", "-o", str(d / "ex")]),
        main(["testset", *common, "--lexicon", str(data / "lex.tsv"), "-o", str(d / "t.jsonl")]),
        main(["decode", "--testset", str(d / "t.jsonl"), "--lm", str(data / "tgt.txt"), "--workers", str(workers),
              "-o", str(d / "hyp.txt")]),
        main(["eval", "--testset", str(d / "t.jsonl"), "--hyps", str(d / "hyp.txt"), "--shuffle-check",
              "--seed", "9", "-o", str(d / "ev")]),
    ]
    files = ["c.jsonl", "dc.jsonl", "ex.input", "ex.target", "ex.positions.jsonl", "t.jsonl", "t.jsonl.exclude",
             "hyp.txt", "ev/report.json", "ev/cases.tsv", "ev/review_queue.jsonl"]
    return codes, {f: (d / f).read_bytes() for f in files}


def test_criterion_9_determinism_and_throughput(tmp_path):
    r = random.Random(9)
    vocab_src = ["the", "proposal", "was", "planned", "for", "municipalities", "budget", "we", "need", "a"]
    vocab_tgt = ["ten", "návrh", "byl", "plánován", "pro", "obce", "rozpočet", "my", "potřebujeme", "jeden"]
    src, tgt = [], []
    for _ in range(3000):
        idx = r.choices(range(len(vocab_src)), k=r.randint(3, 12))
        src.append(" ".join(vocab_src[i] for i in idx))
        tgt.append(" ".join(vocab_tgt[i] for i in idx))
    data = tmp_path / "data"
    data.mkdir()
    (data / "src.txt").write_text("\n".join(src) + "\n", encoding="utf-8")
    (data / "tgt.txt").write_text("\n".join(tgt) + "\n", encoding="utf-8")
    (data / "lex.tsv").write_text("proposal\tnávrh\nbudget\trozpočet\n", encoding="utf-8")
    codes_1, out_1 = run_pipeline(tmp_path / "w1", data, 1)
    codes_n, out_n = run_pipeline(tmp_path / "w4", data, 4)
    codes_again, out_again = run_pipeline(tmp_path / "w4b", data, 4)
    identical = out_1 == out_n == out_again and set(codes_1 + codes_n + codes_again) == {0}

    pairs = synthetic_pairs(100_000, seed=99)
    cfg = SamplerConfig(seed=3)
    rates = []
    for _ in range(3):
        t0 = time.perf_counter()
        n = sum(1 for _ in sample_random_many(pairs, cfg))
        rates.append(n / (time.perf_counter() - t0))
    rate = max(rates)
    ok = identical and rate >= 50_000
    verdict(9, "determinism and throughput", ok,
            f"outputs identical across 1/4 workers and reruns: {identical}, synthesis {rate:,.0f} pairs/s")
    assert ok
