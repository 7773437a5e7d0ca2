import numpy as np
import pytest

from lstmlab import data as D

R8_LABELS = ["acq", "crude", "earn", "grain", "interest", "money-fx", "ship", "trade"]


def _write_r8(dirpath, n_per_class=3, extra_test_label=None):
    dirpath.mkdir(parents=True, exist_ok=True)
    train_lines, test_lines = [], []
    for k, lab in enumerate(R8_LABELS):
        for j in range(n_per_class):
            train_lines.append(f"{lab}\tshares of {lab} rose {j} percent in trading")
        test_lines.append(f"{lab}\t{lab} report unseenword today")
    if extra_test_label:
        test_lines.append(f"{extra_test_label}\tsomething")
    (dirpath / "train.txt").write_text("\n".join(train_lines) + "\n", encoding="utf-8")
    (dirpath / "test.txt").write_text("\n".join(test_lines) + "\n", encoding="utf-8")
    return dirpath


def test_tokenize():
    assert D.tokenize("The cat, the CAT!") == ["the", "cat", "the", "cat"]
    assert D.tokenize("") == []
    assert D.tokenize("a1 b-2") == ["a1", "b", "2"]


def test_build_vocab():
    v = D.build_vocab([["a", "a", "b"]], min_count=2)
    assert v.id_to_token == ("UNK", "a")
    assert v["b"] == D.UNK_ID
    v1 = D.build_vocab([["b", "a"]], min_count=1)
    assert v1.id_to_token == ("UNK", "a", "b")
    assert D.build_vocab(["x y x", "y z"], 1) == D.build_vocab(["x y x", "y z"], 1)
    assert D.build_vocab(["x y x", "y z"], 1).id_to_token == ("UNK", "x", "y", "z")
    with pytest.raises(D.DataError):
        D.build_vocab([], 1)
    with pytest.raises(D.DataError):
        D.build_vocab(["", "  "], 1)


def test_encode_pad_truncate():
    vocab = D.Vocab(("UNK", "t1", "t2", "t3"))
    assert D.encode(["t1", "t2", "t3"], vocab, 5) == [1, 2, 3, 0, 0]
    long = [f"w{k}" for k in range(40)]
    vocab_long = D.Vocab(("UNK", *long))
    out = D.encode(long, vocab_long, 32)
    assert out == list(range(1, 33))
    assert D.encode(["zz", "qq"], vocab, 32) == [0] * 32
    assert len(D.encode([], vocab)) == 32


def test_load_r8(tmp_path):
    train, test = D.load_r8(_write_r8(tmp_path / "r8"), min_count=2)
    assert train.num_classes == test.num_classes == 8
    assert train.label_names == tuple(R8_LABELS)
    for ds in (train, test):
        x, y = ds.arrays()
        assert x.shape[1] == 32 and x.max() < len(train.vocab)
        assert set(y) <= set(range(8))
    # 'unseenword' appears only in the test file
    assert "unseenword" not in train.vocab


def test_vocab_ignores_test_file(tmp_path):
    root = _write_r8(tmp_path / "a")
    train1, _ = D.load_r8(root)
    (root / "test.txt").write_text("earn\tcompletely different words here\n", encoding="utf-8")
    train2, _ = D.load_r8(root)
    assert train1.vocab == train2.vocab
    assert train1.samples == train2.samples


def test_r8_errors(tmp_path):
    with pytest.raises(D.DataError, match="no R8"):
        D.load_r8(tmp_path)
    root = _write_r8(tmp_path / "bad", extra_test_label="sports")
    with pytest.raises(D.DataError, match=r"test.txt:9: unknown label 'sports'"):
        D.load_r8(root)
    f = tmp_path / "broken.txt"
    f.write_text("earn\tok line\nno tab here\n", encoding="utf-8")
    with pytest.raises(D.DataError, match=r"broken.txt:2"):
        D.read_r8(f)
    empty = tmp_path / "empty.txt"
    empty.write_text("", encoding="utf-8")
    with pytest.raises(D.DataError, match="empty"):
        D.read_r8(empty)
    with pytest.raises(D.DataError, match="no such file"):
        D.read_r8(tmp_path / "missing.txt")


def test_r8_custom_line_parser(tmp_path):
    # space-separated "label text" layout
    root = _write_r8(tmp_path / "tsv")
    alt = tmp_path / "alt"
    alt.mkdir()
    for name in ("train.txt", "test.txt"):
        (alt / name).write_text((root / name).read_text().replace("\t", " ", 1 << 30), encoding="utf-8")

    def space_line(line):
        label, _, text = line.partition(" ")
        return label, text

    assert D.load_r8(alt, parse_line=space_line) == D.load_r8(root)
    with pytest.raises(D.DataError, match=r"train.txt:1: expected 'label<TAB>text'"):
        D.load_r8(alt)


def test_r8_requires_eight_classes(tmp_path):
    (tmp_path / "train.txt").write_text("earn\ta b\nacq\tc d\n", encoding="utf-8")
    (tmp_path / "test.txt").write_text("earn\ta b\n", encoding="utf-8")
    with pytest.raises(D.DataError, match="8 classes"):
        D.load_r8(tmp_path)


AFFR_CSV = '''Id,ProductId,UserId,ProfileName,HelpfulnessNumerator,HelpfulnessDenominator,Score,Time,Summary,Text
1,B001,A1,"Jo, the taster",1,1,5,1303862400,Good,"I have bought several of these, and they are great."
2,B002,A2,dll,0,0,1,1346976000,Not as Advertised,"Product arrived labeled as ""Jumbo"" but small."
3,B003,A3,x,1,1,3,1219017600,meh,"It is fine, I guess."
4,B004,A4,y,0,0,4,1307923200,Nice,"Nice taffy, very good flavors"
5,B005,A5,z,0,0,2,1350777600,Bad,"Bad taste, good price"
'''


def test_binarize_rule():
    assert D.binarize_rating(5) == "positive"
    assert D.binarize_rating(4) == "positive"
    assert D.binarize_rating(1) == "negative"
    assert D.binarize_rating(2) == "negative"
    assert D.binarize_rating(3) is None


def test_read_affr(tmp_path):
    path = tmp_path / "Reviews.csv"
    path.write_text(AFFR_CSV, encoding="utf-8")
    docs = D.read_affr(path)
    assert [d.label for d in docs] == ["positive", "negative", "positive", "negative"]
    assert docs[1].tokens[:4] == ("product", "arrived", "labeled", "as")
    train, test = D.load_affr(path, min_count=1, test_fraction=0.25, seed=0)
    assert len(train) == 3 and len(test) == 1
    assert train.num_classes == 2 and train.label_names == ("negative", "positive")


def test_affr_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("Id,Text\n1,hello\n", encoding="utf-8")
    with pytest.raises(D.DataError, match="Score"):
        D.read_affr(bad)
    bad.write_text("Score,Text\n5,fine\nfive,oops\n", encoding="utf-8")
    with pytest.raises(D.DataError, match=r"bad.csv:3"):
        D.read_affr(bad)
    bad.write_text("", encoding="utf-8")
    with pytest.raises(D.DataError):
        D.read_affr(bad)


def _dataset(n):
    samples = tuple(D.Sample((k, 0), k % 2) for k in range(n))
    return D.Dataset("toy", samples, 2, vocab=D.Vocab(("UNK",)))


def test_split_validation():
    ds = _dataset(100)
    tr, va = D.split_validation(ds, 0.10, seed=4)
    assert (len(tr), len(va)) == (90, 10)
    assert set(tr.samples).isdisjoint(va.samples)
    assert set(tr.samples) | set(va.samples) == set(ds.samples)
    assert tr.split == "train" and va.split == "valid"
    tr2, va2 = D.split_validation(ds, 0.10, seed=4)
    assert tr2.samples == tr.samples and va2.samples == va.samples
    assert D.split_validation(ds, 0.10, seed=5)[1].samples != va.samples
    tr3, va3 = D.split_validation(_dataset(3), 0.5, seed=0)
    assert (len(tr3), len(va3)) == (1, 2)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            D.split_validation(ds, bad)


def test_synth_longrange():
    a = D.synth_longrange(200, 32, 12, 24, seed=0)
    b = D.synth_longrange(200, 32, 12, 24, seed=1)
    for ds in (a, b):
        x, y = ds.arrays()
        assert x.shape == (200, 32) and x.max() < 12 and x.min() >= 1
        np.testing.assert_array_equal(x[:, 24] - 1, y)
        others = np.delete(x, 24, axis=1)
        assert others.min() >= 3
    assert not np.array_equal(a.arrays()[0], b.arrays()[0])
    assert len(a.vocab) == 12
    with pytest.raises(ValueError):
        D.synth_longrange(10, 8, 12, 8)


def test_every_sample_is_well_formed(tmp_path):
    train, test = D.load_r8(_write_r8(tmp_path / "r8"), seq_len=7, min_count=1)
    for ds in (train, test):
        for s in ds.samples:
            assert len(s.tokens) == 7 and max(s.tokens) < len(train.vocab)
