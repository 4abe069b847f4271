import json

import pytest

from tapcore.cli import main

SMALL = ["--ns", "6", "--container", "25,25,25", "--seed", "3"]


class TestGen:
    def test_writes_dataset(self, tmp_path):
        out = tmp_path / "ds.json"
        assert main(["gen", "--source", "ppsg", "--ns", "10",
                     "--container", "30,30,30", "--seed", "4",
                     "--out", str(out)]) == 0
        obj = json.loads(out.read_text())
        assert obj["source"] == "ppsg" and len(obj["boxes"]) == 10
        assert "solution" in obj

    def test_prints_to_stdout(self, capsys):
        assert main(["gen", "--source", "rand"] + SMALL) == 0
        obj = json.loads(capsys.readouterr().out)
        assert len(obj["boxes"]) == 6


class TestRun:
    def test_run_writes_records_csv_and_figure(self, tmp_path):
        out = tmp_path / "run"
        assert main(["run", "--policy", "greedy", "--episodes", "2",
                     "--out", str(out)] + SMALL) == 0
        assert (out / "episodes.csv").exists()
        assert (out / "episode_00000.json").exists()
        assert (out / "episode_00001.json").exists()
        assert (out / "summary.json").exists()
        assert (out / "compactness.png").stat().st_size > 0
        header = (out / "episodes.csv").read_text().splitlines()[0]
        assert header == "seed,source,mode,C,N_t,dNt,steps,unstable_events"

    def test_run_from_dataset(self, tmp_path):
        ds = tmp_path / "ds.json"
        main(["gen", "--source", "rand", "--out", str(ds)] + SMALL)
        out = tmp_path / "run"
        assert main(["run", "--dataset", str(ds), "--episodes", "1",
                     "--out", str(out)] + SMALL) == 0
        rec = json.loads((out / "episode_00000.json").read_text())
        obj = json.loads(ds.read_text())
        assert rec["config"]["boxes"] == obj["boxes"]

    def test_unreachable_policy_endpoint_exit_3(self, tmp_path):
        rc = main(["run", "--policy", "external:127.0.0.1:1",
                   "--episodes", "1"] + SMALL)
        assert rc == 3


class TestReplayExport:
    @pytest.fixture()
    def record(self, tmp_path):
        out = tmp_path / "run"
        main(["run", "--episodes", "1", "--out", str(out)] + SMALL)
        return out / "episode_00000.json"

    def test_replay_ok(self, record, capsys):
        assert main(["replay", "--record", str(record)]) == 0
        assert "replay ok" in capsys.readouterr().out

    def test_corrupted_record_exit_4(self, record, tmp_path):
        obj = json.loads(record.read_text())
        obj["metrics"]["C"] += 0.25
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(obj))
        assert main(["replay", "--record", str(bad)]) == 4

    def test_export_obj(self, record, tmp_path):
        out = tmp_path / "pack.obj"
        assert main(["export", "--record", str(record), "--format", "obj",
                     "--out", str(out)]) == 0
        text = out.read_text()
        assert text.startswith("#")
        assert "\nv " in text and "\nf " in text

    def test_export_json(self, record, tmp_path):
        out = tmp_path / "pack.json"
        assert main(["export", "--record", str(record), "--format", "json",
                     "--out", str(out)]) == 0
        obj = json.loads(out.read_text())
        assert obj["containers"][0]["placements"]


class TestTable:
    def test_table_outputs(self, tmp_path, capsys):
        out = tmp_path / "tab"
        assert main(["table", "--sources", "rand", "--modes", "single",
                     "--policy", "greedy", "--episodes", "2",
                     "--out", str(out)] + SMALL) == 0
        assert "rand" in capsys.readouterr().out
        assert (out / "episodes.csv").exists()
        assert (out / "table.txt").exists()
        assert (out / "table.json").exists()
        assert (out / "table.png").stat().st_size > 0
        cells = json.loads((out / "table.json").read_text())
        assert cells[0]["source"] == "rand" and "records" not in cells[0]


class TestUsage:
    def test_missing_subcommand_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_bad_flag_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--container", "10,10"])
        assert exc.value.code == 2
