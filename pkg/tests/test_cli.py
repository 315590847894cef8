from __future__ import annotations

import json
import runpy
import shutil
import sys

import pytest

from locmap import cli
from locmap.config import Config, ConfigError
from locmap.gateway import CallableTransport, Gateway

from .conftest import FIXTURES

CONFIG = str(FIXTURES / "config.toml")
CORPUS = FIXTURES / "corpus"
GOLDEN = FIXTURES / "golden"


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def scripted_gateway(monkeypatch):
    """Route every gateway the CLI builds to ``answer``."""

    def install(answer):
        monkeypatch.setattr(Config, "gateway", lambda self, model=None: Gateway(transport=CallableTransport(answer)))

    return install


def small_corpus(tmp_path, n=3):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    for i in range(n):
        (corpus / f"d{i}.txt").write_text(f"I lived in Town{i}.\n", encoding="utf-8")
    return corpus


def town_answer(fail=()):
    def answer(req):
        text = req.messages[0][1]
        name = next(f"Town{i}" for i in range(10) if f"1. I lived in Town{i}." in text)
        if name in fail:
            return "no idea"
        turn = sum(1 for role, _ in req.messages if role == "user")
        if turn <= 2:
            return json.dumps({"nodes": [[name, {"type": "City"}]], "edges": []})
        return json.dumps({"nodes": [[name, {"sentences": [1, 1]}]], "edges": []})

    return answer


class TestConfig:
    def test_file_and_flags(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text('[gateway]\nreplay_dir = "r"\nconcurrency = 3\n', encoding="utf-8")
        cfg = Config.load(p)
        assert cfg.replay_dir == str((tmp_path / "r").resolve())
        assert cfg.concurrency == 3
        assert cfg.updated({"concurrency": 1, "model": None}).concurrency == 1

    @pytest.mark.parametrize(
        "body", ['colour = "red"\n', 'transport = "pigeon"\n', "concurrency = 0\n", "type_penalty = -1\n", "not toml ["]
    )
    def test_rejected(self, tmp_path, body):
        p = tmp_path / "c.toml"
        p.write_text(body, encoding="utf-8")
        with pytest.raises(ConfigError):
            Config.load(p)

    def test_replay_needs_dir(self):
        with pytest.raises(ConfigError):
            Config().gateway()


class TestExitCodes:
    def test_success(self, tmp_path, capsys, scripted_gateway):
        scripted_gateway(town_answer())
        assert run("extract", small_corpus(tmp_path), tmp_path / "out") == cli.OK
        assert capsys.readouterr().out.startswith("3 ok, 0 failed")
        assert not (tmp_path / "out" / "failures.json").exists()

    def test_partial(self, tmp_path, capsys, scripted_gateway):
        scripted_gateway(town_answer(fail={"Town1"}))
        assert run("extract", small_corpus(tmp_path), tmp_path / "out") == cli.OK
        assert capsys.readouterr().out.startswith("2 ok, 1 failed")
        failed = json.loads((tmp_path / "out" / "failures.json").read_text())["failed"]
        assert [f["doc_id"] for f in failed] == ["d1"]
        assert not (tmp_path / "out" / "d1.graph.json").exists()

    def test_total_failure(self, tmp_path, scripted_gateway):
        scripted_gateway(town_answer(fail={"Town0", "Town1", "Town2"}))
        assert run("extract", small_corpus(tmp_path), tmp_path / "out") == cli.TOTAL_FAILURE

    def test_replay_miss_is_total_failure(self, tmp_path, capsys):
        code = run("extract", small_corpus(tmp_path), tmp_path / "out", "--replay-dir", tmp_path / "empty")
        assert code == cli.TOTAL_FAILURE
        assert "no recorded response" in capsys.readouterr().err

    def test_input_error(self, tmp_path):
        assert run("extract", tmp_path / "missing", tmp_path / "out", "--config", CONFIG) == cli.INPUT_ERROR
        assert run("merge", tmp_path, "--config", CONFIG) == cli.INPUT_ERROR

    def test_config_error(self, tmp_path):
        assert run("extract", CORPUS, tmp_path, "--config", tmp_path / "none.toml") == cli.CONFIG_ERROR
        assert run("extract", CORPUS, tmp_path, "--concurrency", 0) == cli.CONFIG_ERROR
        assert run("extract", CORPUS, tmp_path) == cli.CONFIG_ERROR  # replay without a directory

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            run("frobnicate")
        assert exc.value.code == 2


class TestVerbs:
    """Single commands run against the golden pipeline outputs."""

    def test_replayed_pipeline(self, tmp_path, capsys):
        assert run("pipeline", CORPUS, tmp_path / "out", "--refs", FIXTURES / "refs.json", "--config", CONFIG) == 0
        out = capsys.readouterr().out
        assert "5 ok, 0 failed" in out
        assert (tmp_path / "out" / "map.json").read_bytes() == (GOLDEN / "map.json").read_bytes()

    def test_merge_offline_with_overrides(self, tmp_path):
        overrides = tmp_path / "o.json"
        overrides.write_text('[["Krakow", "Cracow"]]', encoding="utf-8")
        code = run(
            "merge", GOLDEN / "extract", "--offline", "--overrides", overrides,
            "--out-map", tmp_path / "m.json", "--out-aliases", tmp_path / "a.json",
        )
        assert code == 0
        names = [n for n, _ in json.loads((tmp_path / "m.json").read_text())["nodes"]]
        assert "Krakow" in names and "Cracow" not in names
        assert "US" in names and "USA" in names  # no model, no other merges

    def test_evaluate(self, tmp_path):
        prefix = tmp_path / "rep"
        assert run("evaluate", GOLDEN / "trajectories", FIXTURES / "refs.json", "--out", prefix) == 0
        assert (tmp_path / "rep.csv").read_bytes() == (GOLDEN / "report.csv").read_bytes()

    def test_evaluate_map_against_itself(self, tmp_path):
        m = GOLDEN / "map.json"
        assert run("evaluate", GOLDEN / "trajectories", FIXTURES / "refs.json", "--map", m, "--reference-map", m,
                   "--out", tmp_path / "rep") == 0
        assert json.loads((tmp_path / "rep.json").read_text())["map"]["f1"] == 1.0
        assert run("evaluate", GOLDEN / "trajectories", FIXTURES / "refs.json", "--map", m,
                   "--out", tmp_path / "rep") == cli.INPUT_ERROR

    def test_baselines(self, tmp_path):
        refs = FIXTURES / "refs.json"
        assert run("baseline", "frequent", refs, "--out", tmp_path / "f.json") == 0
        assert json.loads((tmp_path / "f.json").read_text())["d02"] == ["Kraków"] * 5
        assert run("baseline", "random", refs, "--map", GOLDEN / "map.json", "--seed", 3, "--out", tmp_path / "r.json") == 0
        first = (tmp_path / "r.json").read_text()
        run("baseline", "random", refs, "--map", GOLDEN / "map.json", "--seed", 3, "--out", tmp_path / "r.json")
        assert (tmp_path / "r.json").read_text() == first
        assert run("baseline", "random", refs, "--out", tmp_path / "r.json") == cli.INPUT_ERROR

    def test_ner_baseline(self, tmp_path):
        gaz = tmp_path / "gaz.json"
        gaz.write_text('{"Lodz": "GPE", "Auschwitz": "LOC", "Lodz Ghetto": "LOC"}', encoding="utf-8")
        refs = tmp_path / "refs.json"
        refs.write_text('{"d05": ["x"]}', encoding="utf-8")
        assert run("baseline", "ner", refs, "--corpus", CORPUS, "--gazetteer", gaz, "--out", tmp_path / "n.json") == 0
        assert json.loads((tmp_path / "n.json").read_text()) == {"d05": ["Lodz", "Lodz Ghetto", "Auschwitz"]}

    def test_refmap_and_evaluate_map(self, tmp_path):
        gis = tmp_path / "gis.csv"
        gis.write_text(
            "name,level,lat,lon\nTarn,natural,54.45,-3.09\nKeswick,city,54.6,-3.13\nCumbria,county,54.5,-3.0\n",
            encoding="utf-8",
        )
        assert run("refmap", gis, "--out", tmp_path / "ref.json") == 0
        assert json.loads((tmp_path / "ref.json").read_text())["edges"] == [
            ["Tarn", "Keswick", {"relation": "inclusion"}],
            ["Keswick", "Cumbria", {"relation": "inclusion"}],
        ]
        assert run("evaluate-map", tmp_path / "ref.json", gis, "--out", tmp_path / "s.json") == 0
        scores = json.loads((tmp_path / "s.json").read_text())
        assert scores["model"]["f1"] == 1.0 and scores["random_tree"]["f1"] == 1.0

    def test_similarity(self, tmp_path, capsys):
        assert run("similarity", GOLDEN / "map.json", GOLDEN / "trajectories", "--top-k", 1, "--out", tmp_path / "s.csv") == 0
        assert (tmp_path / "s.csv").read_bytes() == (GOLDEN / "similarity.csv").read_bytes()
        assert capsys.readouterr().out.splitlines()[-1].startswith("d01\td04")
        assert run("similarity", GOLDEN / "map.json", GOLDEN / "trajectories", "--measure", "dtw", "--out", tmp_path / "d.csv") == 0

    def test_transitions(self, tmp_path):
        t = GOLDEN / "trajectories"
        assert run("transitions", t, "--filter", "none", "--min-docs", 3, "--out", tmp_path / "t.csv") == 0
        assert (tmp_path / "t.csv").read_text().splitlines() == ["from,to,count", "Lodz,Lodz Ghetto,3", "Lodz Ghetto,Auschwitz,3"]
        assert run("transitions", t, "--map", GOLDEN / "map.json", "--min-docs", 2, "--out", tmp_path / "h.csv") == 0
        assert (tmp_path / "h.csv").read_text().splitlines() == [
            "from,to,count", "Lodz,Lodz Ghetto,3", "Lodz Ghetto,Auschwitz,3", "Auschwitz,New York,2"
        ]
        assert run("transitions", t, "--out", tmp_path / "x.csv") == cli.INPUT_ERROR
        assert run("transitions", t, "--filter", "Spaceport", "--map", GOLDEN / "map.json", "--out", tmp_path / "x.csv") == 1

    def test_visualize(self, tmp_path):
        traj = GOLDEN / "trajectories" / "d01.trajectory.json"
        assert run("visualize", GOLDEN / "map.json", "--trajectory", traj, "--out", tmp_path / "m.dot") == 0
        assert (tmp_path / "m.dot").read_bytes() == (GOLDEN / "map.dot").read_bytes()
        assert run("visualize", GOLDEN / "map.json", "--format", "graphml", "--min-degree", 2, "--out", tmp_path / "m.graphml") == 0

    def test_trajectories(self, tmp_path):
        code = run("trajectories", GOLDEN / "extract", "--map", GOLDEN / "map.json", "--aliases", GOLDEN / "aliases.json",
                   "--out", tmp_path)
        assert code == 0
        for p in sorted((GOLDEN / "trajectories").iterdir()):
            assert (tmp_path / p.name).read_bytes() == p.read_bytes()

    def test_module_entry(self, tmp_path, monkeypatch):
        shutil.copytree(GOLDEN / "trajectories", tmp_path / "t")
        argv = ["locmap", "transitions", str(tmp_path / "t"), "--filter", "none", "--out", str(tmp_path / "x.csv")]
        monkeypatch.setattr(sys, "argv", argv)
        with pytest.raises(SystemExit) as exc:
            runpy.run_module("locmap", run_name="__main__")
        assert exc.value.code == 0
