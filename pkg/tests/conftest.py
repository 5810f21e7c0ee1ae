import numpy as np
import pytest
from hypothesis import settings, strategies as st

from haarexp.ncalg import Letter, NCPoly

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical checks")
    config.addinivalue_line("markers", "acceptance(k): acceptance criterion number k")


KINDS = ("U", "V", "Z", "Y")


@st.composite
def letters(draw, d=2, q=2):
    kind = draw(st.sampled_from(KINDS))
    top = d if kind in ("U", "V") else q
    return Letter(kind, draw(st.integers(1, top)))


@st.composite
def polys(draw, d=2, q=2, max_deg=5, max_terms=4):
    n = draw(st.integers(0, max_terms))
    terms = {}
    for _ in range(n):
        w = tuple(draw(st.lists(letters(d, q), max_size=max_deg)))
        re = draw(st.integers(-3, 3))
        im = draw(st.integers(-3, 3))
        terms[w] = terms.get(w, 0) + complex(re, im)
    return NCPoly(terms)


def random_poly(rng, d=2, q=2, max_deg=5, max_terms=4):
    """Plain-numpy twin of :func:`polys` for loops over many inputs."""
    terms = {}
    for _ in range(rng.integers(0, max_terms + 1)):
        deg = rng.integers(0, max_deg + 1)
        w = []
        for _ in range(deg):
            kind = KINDS[rng.integers(4)]
            top = d if kind in ("U", "V") else q
            w.append(Letter(kind, int(rng.integers(1, top + 1))))
        c = complex(rng.integers(-3, 4), rng.integers(-3, 4))
        terms[tuple(w)] = terms.get(tuple(w), 0) + c
    return NCPoly(terms)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance report ----------------------------------------------------------
# Tests marked ``acceptance(k)`` are grouped by criterion; after the run one
# line per criterion is printed with the worst outcome and the details that
# the tests attached through ``record_property("detail", ...)``.

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        k = mark.args[0]
        entry = _ACCEPTANCE.setdefault(k, {"status": [], "details": [], "time": 0.0})
        status = rep.outcome
        if hasattr(rep, "wasxfail"):
            status = "xfail" if rep.skipped else "xpass"
        entry["status"].append(status)
        entry["time"] += rep.duration
        entry["details"] += [str(v) for name, v in rep.user_properties if name == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[k]
        ok = all(s in ("passed", "xfail", "xpass") for s in e["status"])
        verdict = "PASS" if ok else ("SKIP" if all(s == "skipped" for s in e["status"]) else "FAIL")
        notes = "; ".join(e["details"])
        terminalreporter.write_line(f"criterion {k:2d}: {verdict} ({e['time']:.1f}s) {notes}")
