import numpy as np
import pytest

from lstmlab import lstm


def make_instance(kind="baseline", literal=False, vocab=9, emb=3, hidden=4, classes=3,
                  batch=3, steps=4, seed=0):
    variant = lstm.CellVariant(kind, literal)
    params = lstm.init_params(vocab, emb, hidden, classes, variant, seed=seed)
    rng = np.random.default_rng(seed + 100)
    tokens = rng.integers(0, vocab, (batch, steps))
    labels = rng.integers(0, classes, batch)
    return variant, params, tokens, labels


@pytest.fixture
def instance():
    return make_instance


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results):
        terminalreporter.write_line(results[key])
