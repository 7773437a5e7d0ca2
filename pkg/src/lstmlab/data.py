"""Text ingestion: tokenization, vocabulary, fixed-length encoding, splits.

On-disk formats
---------------
R8
    UTF-8 text, one document per line, ``label<TAB>text``.
Amazon Fine Food Reviews
    UTF-8 CSV (RFC 4180 quoting) with at least the ``Score`` and ``Text``
    columns, as in the public Kaggle dump.
"""

from __future__ import annotations

import csv
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .seeding import sub_rng

__all__ = [
    "UNK",
    "UNK_ID",
    "DataError",
    "Document",
    "Sample",
    "Vocab",
    "Dataset",
    "tokenize",
    "build_vocab",
    "encode",
    "encode_documents",
    "read_r8",
    "load_r8",
    "binarize_rating",
    "read_affr",
    "load_affr",
    "split_validation",
    "synth_longrange",
]

UNK = "UNK"
UNK_ID = 0
R8_CLASSES = 8

_TOKEN = re.compile(r"[^\W_]+")


class DataError(ValueError):
    """A dataset file is missing, empty or malformed."""


@dataclass(frozen=True)
class Document:
    tokens: tuple[str, ...]
    label: str
    line: int = 0


@dataclass(frozen=True)
class Sample:
    tokens: tuple[int, ...]
    label: int


@dataclass(frozen=True)
class Vocab:
    id_to_token: tuple[str, ...]
    token_to_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.id_to_token or self.id_to_token[UNK_ID] != UNK:
            raise ValueError("vocabulary must reserve id 0 for UNK")
        mapping = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(mapping) != len(self.id_to_token):
            raise ValueError("vocabulary tokens must be unique")
        object.__setattr__(self, "token_to_id", mapping)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __getitem__(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id


@dataclass(frozen=True)
class Dataset:
    name: str
    samples: tuple[Sample, ...]
    num_classes: int
    split: str = "train"
    vocab: Vocab | None = None
    label_names: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def seq_len(self) -> int:
        return len(self.samples[0].tokens) if self.samples else 0

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Token ids as an ``(N, seq_len)`` int64 array and labels as ``(N,)``."""
        if not self.samples:
            return np.zeros((0, 0), dtype=np.int64), np.zeros(0, dtype=np.int64)
        x = np.array([s.tokens for s in self.samples], dtype=np.int64)
        y = np.array([s.label for s in self.samples], dtype=np.int64)
        return x, y

    def subset(self, indices: Iterable[int], split: str) -> "Dataset":
        return Dataset(
            self.name,
            tuple(self.samples[i] for i in indices),
            self.num_classes,
            split,
            self.vocab,
            self.label_names,
        )


def tokenize(text: str) -> list[str]:
    """Lowercase and split on every run of non-alphanumeric characters."""
    return _TOKEN.findall(text.lower())


def build_vocab(corpus: Iterable[str | Sequence[str]], min_count: int = 2) -> Vocab:
    """Vocabulary from training documents (raw strings or token lists).

    Tokens seen at least ``min_count`` times are kept, ordered by count
    descending then token ascending; id 0 is ``UNK``.
    """
    counts: Counter[str] = Counter()
    for doc in corpus:
        counts.update(tokenize(doc) if isinstance(doc, str) else doc)
    if not counts:
        raise DataError("cannot build a vocabulary from an empty corpus")
    kept = sorted((t for t, c in counts.items() if c >= min_count and t != UNK),
                  key=lambda t: (-counts[t], t))
    return Vocab((UNK, *kept))


def encode(tokens: Sequence[str], vocab: Vocab, seq_len: int = 32) -> list[int]:
    """Map to ids, truncate to the first ``seq_len`` and end-pad with UNK."""
    if seq_len < 1:
        raise ValueError("seq_len must be >= 1")
    ids = [vocab[t] for t in tokens[:seq_len]]
    ids.extend([UNK_ID] * (seq_len - len(ids)))
    return ids


def encode_documents(
    docs: Sequence[Document],
    vocab: Vocab,
    label_names: Sequence[str],
    *,
    name: str,
    split: str,
    seq_len: int = 32,
    source: str = "",
) -> Dataset:
    index = {lab: i for i, lab in enumerate(label_names)}
    samples = []
    for doc in docs:
        if doc.label not in index:
            raise DataError(f"{source}:{doc.line}: unknown label {doc.label!r}")
        samples.append(Sample(tuple(encode(doc.tokens, vocab, seq_len)), index[doc.label]))
    return Dataset(name, tuple(samples), len(label_names), split, vocab, tuple(label_names))


def _open_text(path) -> str:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise DataError(f"{path}: file is empty")
    return text


def tsv_line(line: str) -> tuple[str, str]:
    """Split a ``label<TAB>text`` line; raises ValueError when malformed."""
    label, sep, text = line.partition("\t")
    label = label.strip()
    if not sep or not label:
        raise ValueError("expected 'label<TAB>text'")
    return label, text


def read_r8(path, parse_line: Callable[[str], tuple[str, str]] = tsv_line) -> list[Document]:
    """Parse an R8 file into documents.

    ``parse_line`` maps one non-blank line to ``(label, text)`` and raises
    ValueError on malformed input; swap it to read other layouts.
    """
    docs = []
    for lineno, line in enumerate(_open_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            label, text = parse_line(line)
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        docs.append(Document(tuple(tokenize(text)), label, lineno))
    return docs


def _r8_files(path: Path) -> tuple[Path, Path]:
    if path.is_file():
        raise DataError(f"{path}: expected a directory holding the train and test files")
    for train_name, test_name in (
        ("train.txt", "test.txt"),
        ("train.tsv", "test.tsv"),
        ("r8-train-all-terms.txt", "r8-test-all-terms.txt"),
        ("r8-train-stemmed.txt", "r8-test-stemmed.txt"),
    ):
        if (path / train_name).is_file() and (path / test_name).is_file():
            return path / train_name, path / test_name
    raise DataError(f"{path}: no R8 train/test pair (e.g. train.txt + test.txt) found")


def load_r8(
    path,
    *,
    seq_len: int = 32,
    min_count: int = 2,
    test_path=None,
    parse_line: Callable[[str], tuple[str, str]] = tsv_line,
) -> tuple[Dataset, Dataset]:
    """Load R8 from a directory, or from explicit train and test files.

    The vocabulary and label set come from the training file only.
    """
    if test_path is None:
        train_file, test_file = _r8_files(Path(path))
    else:
        train_file, test_file = Path(path), Path(test_path)
    train_docs = read_r8(train_file, parse_line)
    test_docs = read_r8(test_file, parse_line)
    labels = tuple(sorted({d.label for d in train_docs}))
    if len(labels) != R8_CLASSES:
        raise DataError(f"{train_file}: R8 needs {R8_CLASSES} classes, found {len(labels)}")
    vocab = build_vocab((d.tokens for d in train_docs), min_count)
    train = encode_documents(train_docs, vocab, labels, name="r8", split="train",
                             seq_len=seq_len, source=str(train_file))
    test = encode_documents(test_docs, vocab, labels, name="r8", split="test",
                            seq_len=seq_len, source=str(test_file))
    return train, test


def binarize_rating(score: int) -> str | None:
    """Ratings 4-5 are positive, 1-2 negative; 3 is dropped."""
    if score >= 4:
        return "positive"
    if score <= 2:
        return "negative"
    return None


def read_affr(path, rule: Callable[[int], str | None] = binarize_rating) -> list[Document]:
    text = _open_text(path)
    reader = csv.DictReader(text.splitlines(keepends=True))
    if reader.fieldnames is None or not {"Score", "Text"} <= set(reader.fieldnames):
        raise DataError(f"{path}:1: header must contain 'Score' and 'Text' columns")
    docs = []
    for row in reader:
        lineno = reader.line_num
        if row.get("Score") is None or row.get("Text") is None:
            raise DataError(f"{path}:{lineno}: row has too few fields")
        try:
            score = int(row["Score"])
        except ValueError:
            raise DataError(f"{path}:{lineno}: Score {row['Score']!r} is not an integer") from None
        label = rule(score)
        if label is not None:
            docs.append(Document(tuple(tokenize(row["Text"])), label, lineno))
    if not docs:
        raise DataError(f"{path}: no labelled rows")
    return docs


def load_affr(
    path,
    rule: Callable[[int], str | None] = binarize_rating,
    *,
    seq_len: int = 32,
    min_count: int = 2,
    test_fraction: float = 0.2,
    seed: int = 0,
) -> tuple[Dataset, Dataset]:
    """Load the review CSV and hold out a seeded test split.

    The file has no official split, so ``test_fraction`` of the labelled
    rows (seed stream ``"affr-test"``) become the test set before the
    vocabulary is built from the rest.
    """
    docs = read_affr(path, rule)
    labels = tuple(sorted({d.label for d in docs}))
    train_idx, test_idx = _partition(len(docs), test_fraction, sub_rng(seed, "affr-test"))
    train_docs = [docs[i] for i in train_idx]
    test_docs = [docs[i] for i in test_idx]
    vocab = build_vocab((d.tokens for d in train_docs), min_count)
    train = encode_documents(train_docs, vocab, labels, name="affr", split="train",
                             seq_len=seq_len, source=str(path))
    test = encode_documents(test_docs, vocab, labels, name="affr", split="test",
                            seq_len=seq_len, source=str(path))
    return train, test


def _partition(n: int, fraction: float, rng: np.random.Generator) -> tuple[list[int], list[int]]:
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie strictly between 0 and 1, got {fraction}")
    if n < 2:
        raise ValueError("need at least two samples to split")
    held = min(max(math.floor(n * fraction + 0.5), 1), n - 1)
    order = rng.permutation(n)
    held_idx = sorted(order[:held].tolist())
    keep_idx = sorted(order[held:].tolist())
    return keep_idx, held_idx


def split_validation(dataset: Dataset, fraction: float = 0.10, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded random hold-out of ``round_half_up(N * fraction)`` samples.

    The held-out count is clamped to ``[1, N - 1]``; both parts keep the
    original sample order.
    """
    keep, held = _partition(len(dataset), fraction, sub_rng(seed, "split"))
    return dataset.subset(keep, "train"), dataset.subset(held, "valid")


def synth_longrange(
    n_samples: int,
    seq_len: int = 32,
    vocab_size: int = 16,
    signal_pos: int = 0,
    seed: int = 0,
    num_classes: int = 2,
    split: str = "train",
) -> Dataset:
    """Classification task decided by the single token at ``signal_pos``.

    Ids ``1..num_classes`` are signal tokens (label = id - 1) and appear only
    at ``signal_pos``; every other position holds noise drawn uniformly from
    the remaining ids.  Id 0 is UNK and is never emitted.
    """
    if not 0 <= signal_pos < seq_len:
        raise ValueError(f"signal_pos must lie in [0, {seq_len})")
    if vocab_size < num_classes + 2:
        raise ValueError("vocab_size must leave room for UNK, the signal ids and one noise id")
    rng = sub_rng(seed, f"synth/{split}")
    labels = rng.integers(0, num_classes, n_samples)
    tokens = rng.integers(num_classes + 1, vocab_size, (n_samples, seq_len))
    tokens[:, signal_pos] = labels + 1
    names = [UNK] + [f"sig{k}" for k in range(num_classes)]
    names += [f"noise{k}" for k in range(vocab_size - num_classes - 1)]
    samples = tuple(Sample(tuple(int(t) for t in row), int(lab)) for row, lab in zip(tokens, labels))
    return Dataset("synth_longrange", samples, num_classes, split, Vocab(tuple(names)),
                   tuple(str(k) for k in range(num_classes)))
