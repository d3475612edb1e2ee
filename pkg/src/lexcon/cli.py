"""Command-line entry point: ``lexcon <subcommand> [options]``.

Settings resolve as flag > ``[subcommand]`` config section > ``[common]``
section > built-in default. Every run writes a JSON manifest next to its main
output. Exit codes: 0 success, 1 usage/config error, 2 data error, 3 empty
result.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .assemble import FORMATS, assemble, check_constraint_tokens, check_reserved, write_examples
from .bench import POLICIES, TestSet, build_oracle, build_rare, build_terminology, emit_exclusion, write_exclusion
from .corpus import Corpus, attach_lemmas, load_parallel
from .decode import decode_corpus, train_ngram
from .errors import ConfigError, DataError, LengthMismatch, LexconError
from .evaluate import evaluate, write_case_table
from .lexicon import build_lexicon, term_frequencies
from .morph import Analyzer, derive_lemmas, make_analyzer, table_from_corpus
from .synth import FORM_MODES, SamplerConfig, realize, read_sets, sample_dictionary_many, sample_random_many, set_to_json

log = logging.getLogger("lexcon")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_EMPTY = 0, 1, 2, 3

DEFAULTS = {
    "workers": os.cpu_count() or 1,
    "sampler": "random",
    "form": "surface",
    "skip_ratio": 0.0,
    "p_start": 0.3,
    "p_stop": 0.85,
    "format": "suffix",
    "kind": "oracle",
    "cap_per_term": 10,
    "max_freq": 50,
    "policy": "reference",
    "beam": 8,
    "max_len": 60,
    "order": 3,
    "discount": 0.7,
    "analyzer": "identity",
    "lexicon_mode": None,
    "shuffle_check": False,
}

INT_KEYS = {"seed", "workers", "cap_per_term", "max_freq", "beam", "max_len", "order"}
FLOAT_KEYS = {"skip_ratio", "p_start", "p_stop", "discount"}
BOOL_KEYS = {"shuffle_check"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors share the config exit code
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


class EmptyResult(LexconError):
    pass


# -- configuration ------------------------------------------------------------

def _convert(key: str, value):
    if value is None or isinstance(value, (int, float, bool)) and not isinstance(value, str):
        return value
    try:
        if key in INT_KEYS:
            return int(value)
        if key in FLOAT_KEYS:
            return float(value)
        if key in BOOL_KEYS:
            return str(value).strip().lower() in ("1", "true", "yes", "on")
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return value


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config sections and flags into one flat settings dict."""
    settings = dict(DEFAULTS)
    if args.config:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(args.config, encoding="utf-8") as f:
                parser.read_file(f)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        for section in ("common", args.command):
            if parser.has_section(section):
                for key, value in parser.items(section):
                    settings[key.replace("-", "_")] = value
    for key, value in vars(args).items():
        if key in ("command", "config", "func"):
            continue
        if value is not None and value is not False:
            settings[key] = value
        else:
            settings.setdefault(key, value)
    return {k: _convert(k, v) for k, v in settings.items()}


def _need(settings: dict, *keys: str) -> None:
    missing = [k for k in keys if settings.get(k) in (None, "")]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise ConfigError(f"{settings['command']}: missing required setting(s): {flags}")


def _choice(settings: dict, key: str, allowed) -> str:
    value = settings.get(key)
    if value not in allowed:
        raise ConfigError(f"{key} must be one of {', '.join(allowed)} (got {value!r})")
    return value


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(path, settings: dict, inputs: dict, outputs: list, started: datetime) -> None:
    manifest = {
        "subcommand": settings["command"],
        "config": {k: v for k, v in sorted(settings.items()) if k != "command"},
        "seed": settings.get("seed"),
        "inputs": {name: {"path": str(p), "sha256": _digest(p)} for name, p in sorted(inputs.items()) if p},
        "outputs": {str(p): _digest(p) for p in outputs if Path(p).is_file()},
        "version": __version__,
        "started": started.isoformat(timespec="seconds"),
        "finished": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")


# -- shared loading ---------------------------------------------------------------

def _analyzer(settings: dict, side: str = "target") -> Analyzer:
    if side == "source":
        kind = settings.get("src_analyzer") or "identity"
        table = settings.get("src_lemma_table")
    else:
        kind = settings["analyzer"]
        table = settings.get("lemma_table")
    try:
        return make_analyzer(kind, table)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _load(settings: dict, src_key="src", tgt_key="tgt", lemma_prefix="") -> Corpus:
    _need(settings, src_key, tgt_key)
    corpus = load_parallel(settings[src_key], settings[tgt_key])
    for side, key in (("source", lemma_prefix + "src_lemmas"), ("target", lemma_prefix + "tgt_lemmas")):
        if settings.get(key):
            corpus = attach_lemmas(corpus, side, settings[key])
    # Sides without a lemma sidecar get the analyzer's normal forms.
    for side in ("source", "target"):
        if corpus.pairs and corpus.pairs[0].lemmas(side) is None:
            corpus = derive_lemmas(corpus, side, _analyzer(settings, side))
    return corpus


def _lexicon(settings: dict, mode: str):
    _need(settings, "lexicon")
    src_an = _analyzer(settings, "source")
    tgt_an = _analyzer(settings, "target")
    return build_lexicon(settings["lexicon"], src_an, tgt_an, settings.get("lexicon_mode") or mode)


def _workers(settings: dict) -> int:
    n = int(settings.get("workers") or 1)
    if n < 1:
        raise ConfigError("workers must be at least 1")
    return n


def _chunks(items: list, n: int) -> list[list]:
    size = -(-len(items) // n) if items else 0
    return [items[i:i + size] for i in range(0, len(items), size)] if size else []


def _synth_chunk(args) -> list[str]:
    pairs, cfg, sampler, lexicon = args
    if sampler == "random":
        sets = sample_random_many(pairs, cfg)
    else:
        sets = sample_dictionary_many(pairs, lexicon, cfg)
    return [set_to_json(cs) for cs in sets]


def _decode_chunk(args) -> list[str]:
    scorer, cases, form, k, max_len = args
    return decode_corpus(scorer, cases, form, k, max_len)


def _parallel(fn, jobs: list, workers: int) -> list:
    """Run ``fn`` over ``jobs`` keeping job order, so output never depends on ``workers``."""
    if workers == 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


# -- subcommands ---------------------------------------------------------------

def cmd_synth(settings: dict) -> int:
    started = datetime.now(timezone.utc)
    sampler = _choice(settings, "sampler", ("random", "dict"))
    _need(settings, "seed", "output")
    form = _choice(settings, "form", FORM_MODES)
    cfg = SamplerConfig(settings["seed"], settings["p_start"], settings["p_stop"], settings["skip_ratio"], form)
    lexicon = _lexicon(settings, "dictionary") if sampler == "dict" else None
    corpus = _load(settings)
    workers = _workers(settings)
    jobs = [(chunk, cfg, sampler, lexicon) for chunk in _chunks(list(corpus.pairs), workers)]
    out = settings["output"]
    n = 0
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        for lines in _parallel(_synth_chunk, jobs, workers):
            for line in lines:
                f.write(line + "\n")
                n += 1
    write_manifest(out + ".manifest.json", settings, _inputs(settings), [out], started)
    log.info("synth: %d constraint sets -> %s", n, out)
    return EXIT_OK


def cmd_assemble(settings: dict) -> int:
    started = datetime.now(timezone.utc)
    _need(settings, "constraints", "output")
    fmt = _choice(settings, "format", FORMATS)
    corpus = _load(settings)
    sets = read_sets(settings["constraints"])
    check_reserved(corpus, fmt)
    check_constraint_tokens(sets, fmt)
    examples = [assemble(corpus.by_id(cs.pair_id), cs, fmt) for cs in sets]
    prefix = settings["output"]
    paths = [prefix + ".input", prefix + ".target"]
    positions = prefix + ".positions.jsonl" if fmt == "suffix-shift" else None
    write_examples(examples, paths[0], paths[1], positions)
    if positions:
        paths.append(positions)
    write_manifest(prefix + ".manifest.json", settings, _inputs(settings), paths, started)
    log.info("assemble: %d examples in %s format -> %s.*", len(examples), fmt, prefix)
    return EXIT_OK


def cmd_testset(settings: dict) -> int:
    started = datetime.now(timezone.utc)
    kind = _choice(settings, "kind", ("oracle", "terminology", "rare"))
    _need(settings, "output")
    corpus = _load(settings)
    if kind == "oracle":
        testset = build_oracle(corpus, _lexicon(settings, "dictionary"))
    elif kind == "terminology":
        testset = build_terminology(corpus, _lexicon(settings, "terminology"), settings["cap_per_term"])
    else:
        policy = _choice(settings, "policy", POLICIES)
        if policy == "random":
            _need(settings, "seed")
        _need(settings, "train_src", "train_tgt")
        lexicon = _lexicon(settings, "dictionary")
        train = _load(settings, "train_src", "train_tgt", lemma_prefix="train_")
        testset = build_rare(term_frequencies(lexicon, train), lexicon, corpus, settings["max_freq"],
                             policy, settings.get("seed") or 0)
    out = settings["output"]
    testset.write(out)
    excl = settings.get("exclusion") or out + ".exclude"
    write_exclusion(excl, emit_exclusion(testset))
    write_manifest(out + ".run.json", settings, _inputs(settings), [out, excl], started)
    print(json.dumps({k: v for k, v in testset.manifest.items() if k != "trivial_rule"}, sort_keys=True))
    if not testset.cases:
        raise EmptyResult(f"testset: no {kind} cases found")
    return EXIT_OK


def cmd_eval(settings: dict) -> int:
    started = datetime.now(timezone.utc)
    _need(settings, "testset", "hyps")
    if settings.get("shuffle_check"):
        _need(settings, "seed")
    testset = TestSet.read(settings["testset"])
    hyps = Path(settings["hyps"]).read_text(encoding="utf-8").splitlines()
    if len(hyps) != len(testset):
        raise LengthMismatch(len(hyps), len(testset))
    analyzer = _analyzer(settings)
    report = evaluate(hyps, testset, analyzer, settings["seed"] if settings.get("shuffle_check") else None)
    outdir = Path(settings.get("output") or Path(settings["hyps"]).with_suffix(".eval"))
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    write_case_table(outdir / "cases.tsv", report)
    with open(outdir / "review_queue.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for item in report.review_queue:
            f.write(json.dumps(item, ensure_ascii=False) + "\n")
    outputs = [outdir / "report.json", outdir / "cases.tsv", outdir / "review_queue.jsonl"]
    if settings.get("figures"):
        from .plots import render_report

        outputs += render_report(report, settings["figures"])
    print(report.table())
    write_manifest(outdir / "manifest.json", settings, _inputs(settings), outputs, started)
    return EXIT_OK


def cmd_decode(settings: dict) -> int:
    started = datetime.now(timezone.utc)
    if not settings.get("lm"):
        raise ConfigError("decode: --lm (target-language training text) is required")
    _need(settings, "testset", "output")
    form = _choice(settings, "form", ("surface", "lemma", "canonical"))
    if not Path(settings["lm"]).is_file():
        raise ConfigError(f"decode: language model text {settings['lm']} not found")
    lm_text = Path(settings["lm"]).read_text(encoding="utf-8").splitlines()
    testset = TestSet.read(settings["testset"])
    # Constraint words unseen in the LM text still need a vocabulary entry to be forced.
    extra = {t for case in testset for c in case.constraints for t in realize(c, form)}
    scorer = train_ngram(lm_text, settings["order"], settings["discount"], extra_vocab=extra)
    k, max_len = settings["beam"], settings["max_len"]
    if k < 1 or max_len < 1:
        raise ConfigError("beam and max-len must be positive")
    workers = _workers(settings)
    jobs = [(scorer, chunk, form, k, max_len) for chunk in _chunks(list(testset.cases), workers)]
    hyps = [h for part in _parallel(_decode_chunk, jobs, workers) for h in part]
    out = settings["output"]
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        for h in hyps:
            f.write(h + "\n")
    write_manifest(out + ".manifest.json", settings, _inputs(settings), [out], started)
    log.info("decode: %d hypotheses -> %s", len(hyps), out)
    return EXIT_OK


def cmd_stats(settings: dict) -> int:
    corpus = _load(settings)
    stats = {
        "pairs": len(corpus),
        "source_tokens": sum(len(p.source) for p in corpus),
        "target_tokens": sum(len(p.target) for p in corpus),
    }
    for side in ("source", "target"):
        table = table_from_corpus(corpus, side)
        stats[f"{side}_ambiguity_rate"] = round(table.stats.ambiguity_rate, 6) if table.stats else 0.0
    if settings.get("lexicon"):
        lexicon = _lexicon(settings, "dictionary")
        freqs = term_frequencies(lexicon, corpus)
        counts = sorted(freqs.values())
        stats.update({
            "lexicon_entries": len(lexicon),
            "lexicon_dropped_trivial": lexicon.dropped_trivial,
            "terms_seen": sum(1 for c in counts if c),
            "term_occurrences": sum(counts),
            "terms_at_most_max_freq": sum(1 for c in counts if c <= settings["max_freq"]),
        })
    print(json.dumps(stats, indent=2, sort_keys=True))
    return EXIT_OK


def _inputs(settings: dict) -> dict:
    keys = ("src", "tgt", "src_lemmas", "tgt_lemmas", "lexicon", "lemma_table", "src_lemma_table", "constraints", "testset",
            "hyps", "lm", "train_src", "train_tgt", "train_src_lemmas", "train_tgt_lemmas", "config")
    return {k: settings[k] for k in keys if settings.get(k)}


# -- argument parsing ------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--seed", type=int, metavar="N")
    p.add_argument("--workers", type=int, metavar="N")
    p.add_argument("--src", metavar="PATH")
    p.add_argument("--tgt", metavar="PATH")
    p.add_argument("--src-lemmas", metavar="PATH")
    p.add_argument("--tgt-lemmas", metavar="PATH")
    p.add_argument("--lexicon", metavar="PATH")
    p.add_argument("--lexicon-mode", choices=("dictionary", "terminology"))
    p.add_argument("--analyzer", choices=("identity", "stemmer", "lemma-table"),
                   help="target-side normalizer (default identity)")
    p.add_argument("--lemma-table", metavar="PATH")
    p.add_argument("--src-analyzer", choices=("identity", "stemmer", "lemma-table"))
    p.add_argument("--src-lemma-table", metavar="PATH")
    p.add_argument("--output", "-o", metavar="PATH")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lexcon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lexcon {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="sample constraint sets (JSONL)")
    _common(p)
    p.add_argument("--sampler", choices=("random", "dict"))
    p.add_argument("--form", choices=FORM_MODES)
    p.add_argument("--skip-ratio", type=float, metavar="F")
    p.add_argument("--p-start", type=float, metavar="F")
    p.add_argument("--p-stop", type=float, metavar="F")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("assemble", help="serialize constraint sets into model input")
    _common(p)
    p.add_argument("--constraints", metavar="PATH")
    p.add_argument("--format", choices=FORMATS)
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("testset", help="build oracle, terminology or rare-word test sets")
    _common(p)
    p.add_argument("--kind", choices=("oracle", "terminology", "rare"))
    p.add_argument("--cap-per-term", type=int, metavar="N")
    p.add_argument("--max-freq", type=int, metavar="N")
    p.add_argument("--policy", choices=POLICIES)
    p.add_argument("--train-src", metavar="PATH")
    p.add_argument("--train-tgt", metavar="PATH")
    p.add_argument("--train-src-lemmas", metavar="PATH")
    p.add_argument("--train-tgt-lemmas", metavar="PATH")
    p.add_argument("--exclusion", metavar="PATH")
    p.set_defaults(func=cmd_testset)

    p = sub.add_parser("eval", help="score hypotheses against a test set")
    _common(p)
    p.add_argument("--testset", metavar="PATH")
    p.add_argument("--hyps", metavar="PATH")
    p.add_argument("--shuffle-check", action="store_true")
    p.add_argument("--figures", metavar="DIR")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("decode", help="constrained beam search with an n-gram language model")
    _common(p)
    p.add_argument("--testset", metavar="PATH")
    p.add_argument("--lm", metavar="PATH", help="target-language text used to train the n-gram model")
    p.add_argument("--order", type=int, metavar="N")
    p.add_argument("--discount", type=float, metavar="F")
    p.add_argument("--form", choices=("surface", "lemma", "canonical"))
    p.add_argument("--beam", type=int, metavar="N")
    p.add_argument("--max-len", type=int, metavar="N")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("stats", help="corpus and lexicon statistics")
    _common(p)
    p.add_argument("--max-freq", type=int, metavar="N")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve(args)
        settings["command"] = args.command
        return args.func(settings)
    except ConfigError as exc:
        print(f"lexcon {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EmptyResult as exc:
        print(f"lexcon {args.command}: warning: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (DataError, LexconError) as exc:
        print(f"lexcon {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"lexcon {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
