import copy
import json
import random
from pathlib import Path

import pytest
from hypothesis import strategies as st

from mdsrob.codec import Codebook

ROOT = Path(__file__).resolve().parent.parent
DATA = Path(__file__).resolve().parent / "data"
SCENARIOS = ROOT / "scenarios"

GOLDEN_B = "QlpoOTFBWSZTWQVCdGkAAAAJgCAAAkSABCAAIhhoMAsKcYXckU4UJAFQnRpA"

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "ran": False})
    if rep.when == "call" or rep.failed:
        entry["ran"] = True
        entry["ok"] = entry["ok"] and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        status = "PASS" if e["ok"] and e["ran"] else ("SKIP" if not e["ran"] else "FAIL")
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {e['title']}")


def golden_rows():
    rows = []
    for line in (DATA / "golden_frames.tsv").read_text("utf-8").splitlines():
        msg_id, body, pre, frame = line.split("\t")
        rows.append((msg_id, body, pre, frame))
    return rows


def load_json(name):
    return json.loads((SCENARIOS / name).read_text("utf-8"))


# -- hypothesis strategies -------------------------------------------------------

texts = st.text(st.characters(blacklist_categories=("Cs",)), max_size=60)
ids = st.text(st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=12)
letters = st.characters(whitelist_categories=("Lu", "Ll"))
words = st.text(letters, min_size=1, max_size=8)
_token_chars = st.characters(whitelist_categories=("Lu", "Ll", "Nd"), max_codepoint=0x7F)
tokens = st.text(_token_chars, min_size=1, max_size=3)


def _prefix_free(pairs):
    toks = [t for _, t in pairs]
    return not any(a != b and b.startswith(a) for a in toks for b in toks)


@st.composite
def codebooks(draw, max_size=12):
    pairs = draw(st.lists(st.tuples(words, tokens), max_size=max_size,
                          unique_by=(lambda p: p[0], lambda p: p[1])))
    kept = []
    for w, t in pairs:
        if _prefix_free(kept + [(w, t)]):
            kept.append((w, t))
    return Codebook(tuple(kept))


@st.composite
def sentences(draw, cb=None):
    """Text built from codebook words, other words and punctuation, escapes included."""
    vocab = [w for w, _ in cb.entries] if cb is not None else []
    parts = draw(st.lists(
        st.one_of(
            st.sampled_from(vocab) if vocab else words,
            words,
            st.sampled_from([" ", "  ", ",", ".", "|", "\\", "\\sw", "-", "'", "\n", "é", "7"]),
        ),
        max_size=25,
    ))
    return "".join(parts)


def permuted(doc, seed):
    """Same scenario, different declaration order of nodes, edges and edge ends."""
    rng = random.Random(seed)
    out = copy.deepcopy(doc)
    rng.shuffle(out["nodes"])
    edges = [list(reversed(e)) if rng.random() < 0.5 else list(e) for e in out.get("edges", [])]
    rng.shuffle(edges)
    out["edges"] = edges
    keys = list(out.get("keys", {}).items())
    rng.shuffle(keys)
    if keys:
        out["keys"] = dict(keys)
    return dict(reversed(list(out.items())))
