import numpy as np
import pytest
from hypothesis import strategies as st

from consym.model import Clause, Model


def random_model(rng: np.random.Generator, n: int, m: int, max_len: int = 3,
                 weights=(0.5, 1.0, 1.5, -0.7)) -> Model:
    """Random clause model; weights drawn from a small palette so symmetries occur."""
    clauses = []
    for _ in range(m):
        k = int(rng.integers(1, min(max_len, n) + 1))
        vs = rng.choice(n, size=k, replace=False)
        lits = tuple((int(v), bool(rng.integers(2))) for v in vs)
        clauses.append(Clause(lits, float(rng.choice(weights))))
    return Model(tuple(f"x{i}" for i in range(n)), tuple(clauses))


def symmetric_model(rng: np.random.Generator, n: int) -> Model:
    """Random model with a planted symmetry: every clause is closed under swapping x0 and x1."""
    base = random_model(rng, n, int(rng.integers(2, 2 * n)))
    swap = list(range(n))
    swap[0], swap[1] = 1, 0
    clauses = []
    for c in base.clauses:
        clauses.append(c)
        img = Clause(tuple((swap[v], s) for v, s in c.literals), c.weight)
        if sorted(img.literals) != sorted(c.literals):
            clauses.append(img)
    return Model(base.names, tuple(clauses))


@st.composite
def models(draw, min_n=1, max_n=7, max_clauses=10):
    n = draw(st.integers(min_n, max_n))
    m = draw(st.integers(0, max_clauses))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_model(np.random.default_rng(seed), n, m)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance verdicts ---------------------------------------------------------

_VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    """``verdict(number, name, ok, detail)`` records one acceptance line."""
    def record(number: int, name: str, ok: bool | None, detail: str = "") -> None:
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        _VERDICTS[number] = f"criterion {number} {name}: {status}" + (f"  {detail}" if detail else "")
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[number])
