import json
import subprocess
import sys
import time

import pytest

from mdsrob.cli import main

from .conftest import GOLDEN_B, SCENARIOS

GOLDEN = "MDSR0" + GOLDEN_B


def mdsrob(*args, stdin=""):
    return subprocess.run(
        [sys.executable, "-m", "mdsrob", *args],
        input=stdin.encode("utf-8"), capture_output=True,
    )


def out(proc):
    return proc.stdout.decode("utf-8")


@pytest.fixture
def keyring(tmp_path):
    p = tmp_path / "keys.tsv"
    p.write_text("# test keys\nK\tcorrect horse\nJ\tother\n")
    return p


class TestEncode:
    def test_golden(self):
        p = mdsrob("encode", "--id", "1", "--type", "0", stdin="hello\n")
        assert p.returncode == 0
        assert out(p) == GOLDEN + "\n"

    def test_trailing_newline(self):
        kept = mdsrob("encode", "--id", "1", "--keep-trailing-newline", stdin="hello\n")
        d = mdsrob("decode", "--json", stdin=out(kept))
        assert json.loads(out(d))["body"] == "hello\n"

    @pytest.mark.parametrize("body", ["a|b", "x\\|y", "line one\nline two", "the subway at noon", "", "ünï|cødé"])
    def test_pipe_identity(self, body):
        e = mdsrob("encode", "--id", "m|1", "--keep-trailing-newline", stdin=body)
        assert e.returncode == 0
        d = mdsrob("decode", "--json", stdin=out(e))
        assert json.loads(out(d)) == {"id": "m|1", "body": body}

    def test_too_long(self):
        body = "".join(chr(0x4E00 + (i * 7919) % 20000) for i in range(300))
        p = mdsrob("encode", "--id", "1", stdin=body)
        assert p.returncode == 3
        assert out(p) == ""
        assert b"too long by" in p.stderr

    def test_usage(self):
        assert mdsrob("encode", stdin="x").returncode == 2
        assert mdsrob("encode", "--id", "1", "--type", "7", stdin="x").returncode == 2
        assert mdsrob("encode", "--id", "1", "--bogus", stdin="x").returncode == 2

    def test_bad_codebook(self, tmp_path):
        cb = tmp_path / "cb.tsv"
        cb.write_text("one\tsw\ntwo\tswa\n")
        assert mdsrob("encode", "--id", "1", "--codebook", str(cb), stdin="x").returncode == 4
        assert mdsrob("encode", "--id", "1", "--codebook", str(tmp_path / "no"), stdin="x").returncode == 4

    def test_encrypted(self, keyring):
        e = mdsrob("encode", "--id", "A-1", "--type", "1", "--keyring", str(keyring), "--key", "K", stdin="secret")
        assert e.returncode == 0 and out(e).startswith("MDSR1")
        d = mdsrob("decode", "--keyring", str(keyring), stdin=out(e))
        assert out(d) == "A-1\nsecret\n"
        assert mdsrob("decode", stdin=out(e)).returncode == 5

    def test_key_errors(self, keyring):
        assert mdsrob("encode", "--id", "1", "--type", "1", stdin="x").returncode == 5
        assert mdsrob("encode", "--id", "1", "--type", "1", "--keyring", str(keyring),
                      "--key", "Z", stdin="x").returncode == 5


class TestDecode:
    def test_golden(self):
        p = mdsrob("decode", stdin=GOLDEN + "\n")
        assert p.returncode == 0
        assert out(p) == "1\nhello\n"

    def test_not_a_frame(self):
        p = mdsrob("decode", stdin="Nexus 7")
        assert p.returncode == 6 and out(p) == ""

    def test_malformed(self):
        p = mdsrob("decode", stdin="MDSR0!!garbage!!")
        assert p.returncode == 7
        assert p.stderr

    def test_legacy(self):
        p = mdsrob("decode", "--json", stdin="JPChello there")
        assert json.loads(out(p)) == {"id": None, "body": "hello there", "legacy": True}


class TestCodebookCheck:
    def test_ok(self, tmp_path):
        cb = tmp_path / "cb.tsv"
        cb.write_text("subway\tsw\n")
        assert main(["codebook-check", str(cb)]) == 0

    def test_conflict(self, tmp_path, capsys):
        cb = tmp_path / "cb.tsv"
        cb.write_text("one\ta\ntwo\tab\n")
        assert main(["codebook-check", str(cb)]) == 4
        assert "line 2" in capsys.readouterr().err


class TestSimulate:
    def test_line3(self, tmp_path):
        start = time.perf_counter()
        p = mdsrob("simulate", "--scenario", str(SCENARIOS / "line3.json"), "--out", str(tmp_path / "a"))
        elapsed = time.perf_counter() - start
        assert p.returncode == 0
        assert out(p) == "messages=2 nodes=3 coverage=100.0%\n"
        # includes interpreter start-up; the run itself is a few tens of ms
        assert elapsed < 3.0

    def test_in_process_under_a_second(self, tmp_path, capsys):
        start = time.perf_counter()
        assert main(["simulate", "--scenario", str(SCENARIOS / "line3.json"), "--out", str(tmp_path)]) == 0
        assert time.perf_counter() - start < 1.0

    def test_rerun_identical(self, tmp_path):
        for d in ("a", "b"):
            mdsrob("simulate", "--scenario", str(SCENARIOS / "mobility.json"), "--out", str(tmp_path / d))
        assert (tmp_path / "a" / "events.log").read_bytes() == (tmp_path / "b" / "events.log").read_bytes()

    def test_missing_file(self, tmp_path):
        p = mdsrob("simulate", "--scenario", str(tmp_path / "none.json"), "--out", str(tmp_path / "o"))
        assert p.returncode == 8
        assert not (tmp_path / "o").exists()

    def test_invalid(self, tmp_path):
        s = tmp_path / "s.json"
        s.write_text(json.dumps({"schema": 1, "name": "x", "seed": 1, "horizon": 5,
                                 "nodes": [{"id": "A", "base_name": "a"}], "edges": [["A", "B"]]}))
        p = mdsrob("simulate", "--scenario", str(s), "--out", str(tmp_path / "o"))
        assert p.returncode == 8
        assert b"edges.0" in p.stderr


class TestReport:
    def test_summary_and_csv(self, tmp_path, capsys):
        main(["simulate", "--scenario", str(SCENARIOS / "line3_cut.json"), "--out", str(tmp_path)])
        capsys.readouterr()
        assert main(["report", "--run", str(tmp_path)]) == 0
        text = capsys.readouterr().out
        assert text.startswith("messages=2 nodes=3 coverage=83.3%\n")
        assert "reached=2/3" in text
        assert main(["report", "--run", str(tmp_path / "report.json"), "--csv"]) == 0
        assert capsys.readouterr().out == (tmp_path / "delivery.csv").read_text()

    def test_missing(self, tmp_path):
        assert main(["report", "--run", str(tmp_path)]) == 2
