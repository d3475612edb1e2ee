import pytest
from hypothesis import given, strategies as st

from lexcon.corpus import (
    Corpus, SentencePair, attach_lemmas, exclude, load_parallel, normalize_line, read_conllu,
    serialize, tokenize,
)
from lexcon.errors import LineCountMismatch, MissingSentence, TokenCountMismatch, Utf8Error


def write(path, text):
    path.write_bytes(text.encode("utf-8"))
    return path


def test_load_two_files(tmp_path):
    c = load_parallel(write(tmp_path / "s", "a b\n"), write(tmp_path / "t", "x y z\n"))
    assert len(c) == 1
    assert c[0].source.words == ("a", "b") and len(c[0].target) == 3
    assert c[0].id == 0


def test_load_empty(tmp_path):
    assert len(load_parallel(write(tmp_path / "s", ""), write(tmp_path / "t", ""))) == 0


def test_line_count_mismatch(tmp_path):
    with pytest.raises(LineCountMismatch) as err:
        load_parallel(write(tmp_path / "s", "a\nb\nc\n"), write(tmp_path / "t", "a\nb\nc\nd\n"))
    assert (err.value.source_lines, err.value.target_lines) == (3, 4)


def test_bad_utf8_reports_line(tmp_path):
    (tmp_path / "s").write_bytes(b"ok\n\xff\xfe\n")
    write(tmp_path / "t", "a\nb\n")
    with pytest.raises(Utf8Error) as err:
        load_parallel(tmp_path / "s", tmp_path / "t")
    assert err.value.line_no == 1


def test_tsv_format(tmp_path):
    c = load_parallel(write(tmp_path / "c.tsv", "a b\tx\nc\ty z\n"), format="tsv")
    assert [p.target.raw for p in c] == ["x", "y z"]
    assert serialize(c) == "a b\tx\nc\ty z\n"


line = st.text(st.characters(blacklist_categories=("Cs", "Zl", "Zp", "Cc")), max_size=30)


@given(st.lists(st.tuples(line, line), max_size=8))
def test_round_trip_is_byte_identical(tmp_path_factory, rows):
    d = tmp_path_factory.mktemp("rt")
    src = "".join(s + "\n" for s, _ in rows)
    tgt = "".join(t + "\n" for _, t in rows)
    c = load_parallel(write(d / "s", src), write(d / "t", tgt))
    assert serialize(c) == (src, tgt)
    assert [p.id for p in c] == list(range(len(rows)))


@given(line)
def test_tokenize_offsets(text):
    words, starts = tokenize(text)
    assert all(text[s:s + len(w)] == w for w, s in zip(words, starts))
    assert list(starts) == sorted(set(starts))
    assert words == tuple(" ".join(words).split())


def test_attach_conllu(tmp_path):
    conllu = (
        "# text = obcích .\n"
        "1\tObcích\tobec\tNOUN\t_\t_\t0\troot\t_\t_\n"
        "2\t.\t.\tPUNCT\t_\t_\t1\tpunct\t_\t_\n"
        "\n"
        "1-2\tdo_\t_\t_\t_\t_\t_\t_\t_\t_\n"
        "1\tdo\tdo\tADP\t_\t_\t2\tcase\t_\t_\n"
        "2\ttoho\tten\tDET\t_\t_\t0\troot\t_\t_\n"
        "2.1\tx\tx\t_\t_\t_\t_\t_\t_\t_\n"
        "\n"
    )
    rows = read_conllu(write(tmp_path / "t.conllu", conllu))
    assert rows == [[("Obcích", "obec"), (".", ".")], [("do", "do"), ("toho", "ten")]]
    c = Corpus.from_lines(["in villages .", "to it"], ["Obcích .", "do toho"])
    c2 = attach_lemmas(c, "target", tmp_path / "t.conllu")
    assert c2[0].target_lemmas == ("obec", ".")
    assert c2[1].target_lemmas == ("do", "ten")
    assert [p.target for p in c2] == [p.target for p in c]


def test_attach_token_lemma_tsv(tmp_path):
    write(tmp_path / "l.tsv", "Price\tPrice\nrises\trise\n")
    c = attach_lemmas(Corpus.from_lines(["Price rises"], ["x"]), "source", tmp_path / "l.tsv")
    assert c[0].source_lemmas == ("price", "rise")


def test_attach_count_errors(tmp_path):
    c = Corpus.from_lines(["a b c"], ["x"])
    write(tmp_path / "l.tsv", "a\ta\nb\tb\n")
    with pytest.raises(TokenCountMismatch):
        attach_lemmas(c, "source", tmp_path / "l.tsv")
    c2 = Corpus.from_lines(["a", "b"], ["x", "y"])
    write(tmp_path / "one.tsv", "a\ta\n")
    with pytest.raises(MissingSentence):
        attach_lemmas(c2, "source", tmp_path / "one.tsv")


def test_lemma_length_invariant():
    with pytest.raises(TokenCountMismatch):
        SentencePair.from_text(0, "a b", "c", ["a"], None)


def test_exclude():
    c = Corpus.from_lines(["1", "2", "3"], ["Jedna", "Dva  tři", "čtyři"])
    left = exclude(c, {"dva tři"})
    assert [p.id for p in left] == [0, 2]
    assert exclude(c, set()) is c
    assert len(exclude(c, {normalize_line(p.target.raw) for p in c})) == 0
    assert exclude(left, {"dva tři"}).pairs == left.pairs
