import csv
import json
import subprocess
import sys

import pytest

from bomtsp.christofides import tour_from_text
from bomtsp.cli import build_parser, main, read_config
from bomtsp.decompose import combination_from_text
from bomtsp.errors import InputError
from bomtsp.harness import CSV_COLUMNS
from bomtsp.sampling import GammaVector
from bomtsp.subtour_lp import EdgeVector

SUBCOMMANDS = ["subtour", "christofides", "decompose", "sample", "bom", "experiment", "fixtures"]


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestExitCodes:
    def test_unknown_flag(self, capsys):
        code, _, err = run(["bom", "eil51", "--bogus"], capsys)
        assert code == 1 and "unrecognized" in err

    def test_missing_subcommand(self, capsys):
        assert run([], capsys)[0] == 1

    def test_missing_input(self, capsys, tmp_path):
        code, _, err = run(["subtour", str(tmp_path / "none.tsp"), "--out", str(tmp_path)], capsys)
        assert code == 2 and "input error" in err

    def test_bad_file(self, capsys, tmp_path):
        bad = tmp_path / "bad.tsp"
        bad.write_text("NAME : b\nTYPE : TSP\nDIMENSION : 2\nEDGE_WEIGHT_TYPE : ATT\nEOF\n")
        assert run(["christofides", str(bad), "--out", str(tmp_path)], capsys)[0] == 2

    def test_numerical_failure(self, capsys, tmp_path, monkeypatch):
        import bomtsp.cli as cli
        from bomtsp.errors import DecompositionError

        def boom(*a, **k):
            raise DecompositionError("no admissible partner")

        monkeypatch.setattr(cli, "split_decompose", boom)
        code, _, err = run(["decompose", "eil51", "--method", "split", "--out", str(tmp_path)], capsys)
        assert code == 3 and "numerical failure" in err

    def test_samples_must_be_positive(self, capsys, tmp_path):
        assert run(["bom", "eil51", "--samples", "0", "--out", str(tmp_path)], capsys)[0] == 1

    @pytest.mark.parametrize("sub", SUBCOMMANDS)
    def test_help_lists_flags(self, sub, capsys):
        parser = build_parser()
        sp = parser._subparsers._group_actions[0].choices[sub]
        assert main([sub, "--help"]) == 0
        out = capsys.readouterr().out
        for action in sp._actions:
            for opt in action.option_strings:
                assert opt in out


class TestCommands:
    def test_subtour(self, capsys, tmp_path):
        code, out, _ = run(["subtour", "eil51", "--out", str(tmp_path)], capsys)
        assert code == 0 and "422.5" in out
        x = EdgeVector.from_text((tmp_path / "eil51.lp.txt").read_text(), 51)
        assert x.degrees().sum() == pytest.approx(102)

    def test_christofides(self, capsys, tmp_path):
        assert run(["christofides", "eil51", "--out", str(tmp_path)], capsys)[0] == 0
        tour = tour_from_text((tmp_path / "eil51.christofides.tour").read_text())
        assert sorted(tour.order) == list(range(51))

    @pytest.mark.parametrize("method", ["colgen", "split"])
    def test_decompose(self, capsys, tmp_path, method):
        argv = ["decompose", "eil51", "--method", method, "--patience", "10", "--out", str(tmp_path)]
        assert run(argv, capsys)[0] == 0
        tc = combination_from_text((tmp_path / f"eil51.{method}.comb").read_text())
        assert tc.n == 51

    def test_decompose_then_christofides_on_tree(self, capsys, tmp_path):
        run(["decompose", "eil51", "--method", "split", "--out", str(tmp_path)], capsys)
        argv = ["christofides", "eil51", "--tree", str(tmp_path / "eil51.split.comb"), "--out", str(tmp_path)]
        assert run(argv, capsys)[0] == 0

    def test_sample_and_reuse_gamma(self, capsys, tmp_path):
        assert run(["sample", "eil51", "--samples", "3", "--out", str(tmp_path)], capsys)[0] == 0
        gamma = GammaVector.from_text((tmp_path / "eil51.gamma.txt").read_text())
        assert gamma.n == 51
        first = (tmp_path / "eil51.samples.comb").read_text()
        argv = ["sample", "eil51", "--samples", "3", "--gamma", str(tmp_path / "eil51.gamma.txt"),
                "--out", str(tmp_path)]
        assert run(argv, capsys)[0] == 0
        assert (tmp_path / "eil51.samples.comb").read_text() == first
        assert len(combination_from_text(first).trees) == 3

    def test_bom_maxent(self, capsys, tmp_path):
        argv = ["bom", "--method", "maxent", "--samples", "40", "--seed", "7", "--workers", "1",
                "--out", str(tmp_path), "eil51"]
        code, out, _ = run(argv, capsys)
        assert code == 0
        stats = json.loads((tmp_path / "eil51.maxent.stats.json").read_text())
        tour = tour_from_text((tmp_path / "eil51.maxent.tour").read_text())
        assert stats["best_cost"] == tour.cost
        assert stats["best_err_pct"] >= 0
        # same seed, same answer
        run(argv, capsys)
        assert json.loads((tmp_path / "eil51.maxent.stats.json").read_text())["best_cost"] == tour.cost

    @pytest.mark.parametrize("method", ["std", "colgen", "colgen-sr", "split", "split-sr"])
    def test_bom_methods(self, capsys, tmp_path, method):
        argv = ["bom", "burma14", "--method", method, "--samples", "10", "--workers", "1",
                "--patience", "10", "--out", str(tmp_path)]
        assert run(argv, capsys)[0] == 0

    def test_fixtures(self, capsys):
        code, out, _ = run(["fixtures", "--trials", "20"], capsys)
        assert code == 0
        assert "LP cost 4.0" in out and "20/20 agree" in out

    def test_experiment_with_config(self, capsys, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(f"# small run\ninstances = burma14, florentine\nalgorithms = std, maxent, split-sr\n"
                       f"samples = 10\nseed = 3\nworkers = 1\npatience = 10\nout = {tmp_path / 'res'}\n")
        code, out, _ = run(["experiment", "--config", str(cfg)], capsys)
        assert code == 0
        rows = list(csv.reader(open(tmp_path / "res" / "results.csv")))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert {r[2] for r in rows[1:]} == {"Std", "MaxEnt", "Split+SR"}
        assert len(rows) == 7

    def test_experiment_needs_instances(self, capsys):
        assert run(["experiment"], capsys)[0] == 2


class TestConfig:
    def test_parse(self):
        cfg = read_config("a = 1\n".replace("a", "samples") + "# x\n\nseed=2 # inline\n")
        assert cfg == {"samples": "1", "seed": "2"}

    @pytest.mark.parametrize("text", ["samples 3\n", "colour = red\n"])
    def test_errors(self, text):
        with pytest.raises(InputError):
            read_config(text)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "bomtsp", "fixtures", "--trials", "8"],
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
