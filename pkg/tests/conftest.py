from __future__ import annotations

import os

import pytest
from hypothesis import HealthCheck, settings

from lexcon.corpus import SentencePair
from lexcon.synth import Constraint

settings.register_profile("default", max_examples=100, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=300, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

RUNNING_SRC = "Price increase is planned mainly in larger municipalities ."
RUNNING_TGT = "Zvýšení cen je plánováno především ve větších obcích ."
RUNNING_SRC_LEMMAS = "price increase be plan mainly in large municipality ."
RUNNING_TGT_LEMMAS = "zvýšení cena být plánovat především v velký obec ."


def scalar_philox(counter, key, rounds=10):
    """Plain-integer Philox4x32 used as an independent oracle for the vectorized version."""
    m0, m1, w0, w1 = 0xD2511F53, 0xCD9E8D57, 0x9E3779B9, 0xBB67AE85
    x0, x1, x2, x3 = counter
    k0, k1 = key
    for _ in range(rounds):
        p0, p1 = m0 * x0, m1 * x2
        x0, x1, x2, x3 = ((p1 >> 32) ^ x1 ^ k0) & 0xFFFFFFFF, p1 & 0xFFFFFFFF, \
            ((p0 >> 32) ^ x3 ^ k1) & 0xFFFFFFFF, p0 & 0xFFFFFFFF
        k0, k1 = (k0 + w0) & 0xFFFFFFFF, (k1 + w1) & 0xFFFFFFFF
    return x0, x1, x2, x3


def scalar_uniform(seed, stream, j):
    block = scalar_philox((j // 4, stream & 0xFFFFFFFF, stream >> 32, 0), (seed & 0xFFFFFFFF, seed >> 32))
    return block[j % 4] / 2**32


@pytest.fixture
def running_pair() -> SentencePair:
    return SentencePair.from_text(0, RUNNING_SRC, RUNNING_TGT,
                                  RUNNING_SRC_LEMMAS.split(), RUNNING_TGT_LEMMAS.split())


def con(surface, lemma=None, canonical=None, form="surface", tgt=None, src=None, origin="dictionary"):
    surface = tuple(surface.split()) if isinstance(surface, str) else tuple(surface)
    lemma = tuple(lemma.split()) if isinstance(lemma, str) else tuple(lemma or ())
    if canonical is not None and isinstance(canonical, str):
        canonical = tuple(canonical.split())
    return Constraint(surface, lemma, form, canonical, tgt, src, origin)


ACCEPTANCE: list[str] = []


def verdict(number: int, name: str, ok: bool, detail: str = "") -> None:
    """Record one acceptance line; the summary hook prints them after the run."""
    line = f"criterion {number} {name}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else "")
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
