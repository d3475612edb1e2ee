"""Exception hierarchy shared by the pipelines.

``DataError`` subclasses describe malformed or inconsistent inputs (CLI exit
code 2); ``ConfigError`` covers missing or contradictory settings (exit 1).
"""


class LexconError(Exception):
    pass


class ConfigError(LexconError):
    pass


class DataError(LexconError):
    pass


class LineCountMismatch(DataError):
    def __init__(self, source_lines: int, target_lines: int):
        super().__init__(f"line count mismatch: {source_lines} source vs {target_lines} target lines")
        self.source_lines = source_lines
        self.target_lines = target_lines


class Utf8Error(DataError):
    def __init__(self, path, line_no: int):
        super().__init__(f"{path}: invalid UTF-8 on line {line_no}")
        self.path = path
        self.line_no = line_no


class TokenCountMismatch(DataError):
    def __init__(self, pair_id: int, expected: int, got: int):
        super().__init__(f"pair {pair_id}: sidecar has {got} lemmas for {expected} tokens")
        self.pair_id = pair_id


class MissingSentence(DataError):
    def __init__(self, pair_id: int):
        super().__init__(f"sidecar has no sentence for pair {pair_id}")
        self.pair_id = pair_id


class MissingLemmaLayer(DataError):
    def __init__(self, side: str, pair_id: int | None = None):
        where = f" (pair {pair_id})" if pair_id is not None else ""
        super().__init__(f"{side} lemma layer is required{where}")
        self.side = side


class EmptyEntry(DataError):
    def __init__(self, line_no: int):
        super().__init__(f"lexicon line {line_no}: empty source or target term")
        self.line_no = line_no


class ReservedTokenError(DataError):
    pass


class MissingForm(DataError):
    def __init__(self, form: str):
        super().__init__(f"constraint has no {form} tokens")
        self.form = form


class MissingSourceSpan(DataError):
    def __init__(self, index: int, pair_id: int | None = None):
        where = f" in pair {pair_id}" if pair_id is not None else ""
        super().__init__(f"constraint {index}{where} has no source span (factored format needs aligned constraints)")
        self.index = index
        self.pair_id = pair_id


class NoReferenceVariant(DataError):
    def __init__(self, pair_id: int, term: str):
        super().__init__(f"pair {pair_id}: no translation of {term!r} occurs in the reference")
        self.pair_id = pair_id
        self.term = term


class LengthMismatch(DataError):
    def __init__(self, n_hyps: int, n_refs: int):
        super().__init__(f"{n_hyps} hypotheses for {n_refs} references")
        self.n_hyps = n_hyps
        self.n_refs = n_refs


class EmptyCorpus(DataError):
    pass


class ConstraintTokenOutOfVocab(DataError):
    def __init__(self, token):
        super().__init__(f"constraint token {token!r} is not in the scorer vocabulary")
        self.token = token
