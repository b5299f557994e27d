import numpy as np
import pytest

from gradtune.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from gradtune.dataset import read_gtds


def write_spec(tmp_path, **overrides):
    values = {
        "task_a": "cnc",
        "task_b": "ac",
        "hidden": "8",
        "reg": "none",
        "repetitions": "2",
        "seed": "11",
        "sizes": "240,60,60",
        "max_epochs": "40",
        "patience": "2",
        "out": str(tmp_path / "run"),
        "data_dir": str(tmp_path / "data"),
    }
    values.update({k: str(v) for k, v in overrides.items()})
    path = tmp_path / "experiment.spec"
    path.write_text("".join(f"{k} = {v}\n" for k, v in values.items()))
    return path


class TestGenData:
    def test_writes_loadable_gtds(self, tmp_path, capsys):
        out = tmp_path / "ac.gtds"
        code = main(["gen-data", "--task", "ac", "--sizes", "30,10,10", "--seed", "3",
                     "--out", str(out)])
        assert code == EXIT_OK
        ds = read_gtds(out)
        assert ds.task == "ac"
        assert (len(ds.train), len(ds.valid), len(ds.test)) == (30, 10, 10)
        assert "wrote" in capsys.readouterr().out

    def test_unknown_task_is_config_error(self, tmp_path, capsys):
        code = main(["gen-data", "--task", "blobs", "--sizes", "8,4,4",
                     "--out", str(tmp_path / "x.gtds")])
        assert code == EXIT_CONFIG
        assert "unknown task" in capsys.readouterr().err

    def test_bad_sizes_argument(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["gen-data", "--task", "ac", "--sizes", "10,10", "--out", "x"])


class TestPipeline:
    def test_full_flow_and_determinism(self, tmp_path, capsys):
        spec = write_spec(tmp_path)
        assert main(["train-a", "--spec", str(spec)]) in (EXIT_OK, EXIT_BUDGET)

        out = tmp_path / "run"
        first = {}
        assert main(["transfer", "--spec", str(spec), "--mode", "fine"]) in (EXIT_OK, EXIT_BUDGET)
        assert main(["transfer", "--spec", str(spec), "--mode", "gradual"]) in (EXIT_OK, EXIT_BUDGET)
        for p in sorted(out.glob("rows_*.csv")) + sorted(out.glob("history_*_rep*.csv")):
            first[p.name] = p.read_bytes()
        assert "rows_fine.csv" in first and "rows_gradual.csv" in first

        # identical spec -> byte-identical transfer outputs
        assert main(["transfer", "--spec", str(spec), "--mode", "fine"]) in (EXIT_OK, EXIT_BUDGET)
        assert main(["transfer", "--spec", str(spec), "--mode", "gradual"]) in (EXIT_OK, EXIT_BUDGET)
        for name, data in first.items():
            assert (out / name).read_bytes() == data, f"{name} changed between runs"

        code = main(["report", "--dir", str(out), "--format", "csv,json,text"])
        assert code == EXIT_OK
        assert (out / "report.txt").is_file()
        assert (out / "report.json").is_file()

    def test_transfer_before_train_a_is_data_error(self, tmp_path, capsys):
        spec = write_spec(tmp_path, out=str(tmp_path / "never_ran"))
        code = main(["transfer", "--spec", str(spec), "--mode", "fine"])
        assert code == EXIT_DATA
        assert "phase-A" in capsys.readouterr().err

    def test_budget_exit_code(self, tmp_path):
        # max_epochs 2 with patience 20 cannot early-stop: budget exceeded
        spec = write_spec(tmp_path, max_epochs="2", patience="20",
                          out=str(tmp_path / "capped"))
        assert main(["train-a", "--spec", str(spec)]) == EXIT_BUDGET

    def test_missing_spec_file(self, tmp_path, capsys):
        code = main(["train-a", "--spec", str(tmp_path / "absent.spec")])
        assert code == EXIT_CONFIG

    def test_report_on_empty_dir(self, tmp_path, capsys):
        code = main(["report", "--dir", str(tmp_path / "void")])
        assert code == EXIT_DATA

    def test_report_rejects_unknown_format(self, tmp_path):
        spec = write_spec(tmp_path, out=str(tmp_path / "r"), max_epochs="2", patience="20")
        main(["train-a", "--spec", str(spec)])
        main(["transfer", "--spec", str(spec), "--mode", "fine"])
        code = main(["report", "--dir", str(tmp_path / "r"), "--format", "pdf"])
        assert code == EXIT_CONFIG
