"""Configuration layering and the command-line workflow."""
import csv
import json

import pytest

from dualview_tkg import cli
from dualview_tkg.config import ENV_DATA_DIR, ENV_SEED, RunConfig, load_config, parse_config_text
from dualview_tkg.errors import NumericError
from dualview_tkg.rules import load_rules

TINY = ["--dim", "4", "--conv-channels", "2", "--gcn-layers", "1", "--layers-inv", "1", "--layers-dyn", "1",
        "--cap", "3", "--dropout", "0.0"]


class TestRunConfig:
    def test_defaults(self):
        c = RunConfig()
        assert (c.dim, c.dropout, c.max_epochs, c.alpha, c.history_len) == (200, 0.2, 50, 0.7, 3)

    @pytest.mark.parametrize("changes", [dict(dim=0), dict(alpha=1.5), dict(gamma=0.0), dict(dropout=1.0),
                                         dict(cap=0), dict(variant="bogus"), dict(patience=-1)])
    def test_range_checks(self, changes):
        with pytest.raises(ValueError):
            RunConfig(**changes).validate()

    def test_preset_values(self):
        c = RunConfig.from_preset("icews18")
        assert (c.cap, c.mu, c.gamma, c.layers_inv) == (8, 0.01, 0.03, 2)
        assert RunConfig.from_preset("gdelt").granularity == 15
        with pytest.raises(ValueError):
            RunConfig.from_preset("wiki")

    def test_text_round_trip(self):
        c = RunConfig(dim=12, variant="no-coa", lr=0.02)
        assert RunConfig(**parse_config_text(c.to_text())) == c

    def test_parse_errors(self):
        with pytest.raises(ValueError):
            parse_config_text("dim 12\n")
        with pytest.raises(ValueError):
            parse_config_text("colour=blue\n")
        with pytest.raises(ValueError):
            parse_config_text("dim=twelve\n")

    def test_layering_order(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\ndim=16\nseed=3\ncap=5\n")
        env = {ENV_SEED: "9", ENV_DATA_DIR: "/data"}
        c = load_config(path, "icews18", {"cap": 7}, environ=env)
        assert (c.dim, c.seed, c.cap, c.data_dir, c.mu) == (16, 9, 7, "/data", 0.01)


def run_cli(*argv):
    return cli.run([str(a) for a in argv])


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert run_cli("synth", "--out", out, "--timestamps", "20", "--entities", "8") == 0
    return out


class TestWorkflow:
    def test_synth_files_and_determinism(self, synth_dir, tmp_path):
        assert run_cli("synth", "--out", tmp_path, "--timestamps", "20", "--entities", "8") == 0
        for name in ("train.txt", "valid.txt", "test.txt", "entity2id.txt", "relation2id.txt"):
            assert (tmp_path / name).read_bytes() == (synth_dir / name).read_bytes()
        manifest = json.loads((synth_dir / "manifest.json").read_text())
        assert manifest["seed"] == 7 and len(manifest["dataset_sha256"]) == 64

    def test_clean_synth_rule_confidence_end_to_end(self, tmp_path):
        data = tmp_path / "clean"
        assert run_cli("synth", "--out", data, "--noise", "0") == 0
        assert run_cli("mine-rules", "--data-dir", data, "--out", tmp_path / "rules.txt") == 0
        top = load_rules(tmp_path / "rules.txt").for_head(1)[0]
        assert (top.body, top.confidence) == (0, 1.0)
        manifest = json.loads((tmp_path / "rules.txt.manifest.json").read_text())
        assert manifest["rules_sha256"] is not None

    def test_build_graphs(self, synth_dir, tmp_path):
        assert run_cli("build-graphs", "--data-dir", synth_dir, "--out", tmp_path, "--cap", "3") == 0
        lines = next(tmp_path.glob("dynamics_*.txt")).read_text().splitlines()
        assert all(len(line.split()) == 4 and int(line.split()[3]) >= 1 for line in lines)

    def test_train_eval_robustness(self, synth_dir, tmp_path):
        ckpt = tmp_path / "model.npz"
        assert run_cli("train", "--data-dir", synth_dir, "--checkpoint", ckpt, "--max-epochs", "2", *TINY) == 0
        log = [json.loads(l) for l in (tmp_path / "model.npz.log.jsonl").read_text().splitlines()]
        assert [e["epoch"] for e in log] == [1, 2]
        manifest = json.loads((tmp_path / "model.npz.manifest.json").read_text())
        assert manifest["config"]["dim"] == 4 and manifest["dataset_sha256"]

        best = max(log, key=lambda e: e["valid_mrr"])
        report = tmp_path / "valid.csv"
        assert run_cli("eval", "--data-dir", synth_dir, "--checkpoint", ckpt, "--split", "valid",
                       "--report", report) == 0
        with open(report, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["variant", "split", "mrr", "h1", "h3", "h10"]
        assert float(rows[1][2]) == pytest.approx(best["valid_mrr"], abs=5e-5)

        sweep = tmp_path / "robust.csv"
        assert run_cli("robustness", "--data-dir", synth_dir, "--checkpoint", ckpt,
                       "--noise-levels", "0,0.5", "--report", sweep) == 0
        payload = json.loads(sweep.with_suffix(".json").read_text())
        assert payload["config"]["degradation_percent"]["0"] == 0.0

    def test_shape_mismatch_exit_code(self, synth_dir, tmp_path):
        ckpt = tmp_path / "m.npz"
        assert run_cli("train", "--data-dir", synth_dir, "--checkpoint", ckpt, "--max-epochs", "1", *TINY) == 0
        code = run_cli("eval", "--data-dir", synth_dir, "--checkpoint", ckpt, "--dim", "6", "--report",
                       tmp_path / "r.csv")
        assert code == cli.EXIT_SHAPE

    def test_ablate_no_coa(self, synth_dir, tmp_path):
        report = tmp_path / "ablate.csv"
        assert run_cli("ablate", "--data-dir", synth_dir, "--variants", "no-coa", "--max-epochs", "1",
                       "--report", report, *TINY) == 0
        with open(report, newline="") as fh:
            assert list(csv.reader(fh))[1][0] == "no-coa"


class TestErrors:
    def test_missing_data_dir_is_usage_error(self, tmp_path, monkeypatch):
        monkeypatch.delenv(ENV_DATA_DIR, raising=False)
        assert run_cli("mine-rules", "--out", tmp_path / "r.txt") == cli.EXIT_USAGE

    def test_nonexistent_data_dir(self, tmp_path):
        assert run_cli("mine-rules", "--data-dir", tmp_path / "nope", "--out", tmp_path / "r.txt") == cli.EXIT_DATA

    def test_unknown_flag_fails_fast(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli("train", "--bogus-flag", "1", "--checkpoint", "x")
        assert exc.value.code == 2
        assert "usage" in capsys.readouterr().err

    def test_bad_value_is_usage_error(self, synth_dir, tmp_path):
        assert run_cli("mine-rules", "--data-dir", synth_dir, "--out", tmp_path / "r.txt",
                       "--alpha", "3") == cli.EXIT_USAGE

    def test_numeric_error_exit_code(self, monkeypatch):
        def boom(args):
            raise NumericError("loss became NaN")
        monkeypatch.setattr(cli, "cmd_synth", boom)
        assert run_cli("synth", "--out", "unused") == cli.EXIT_NUMERIC

    def test_env_data_dir(self, synth_dir, tmp_path, monkeypatch):
        monkeypatch.setenv(ENV_DATA_DIR, str(synth_dir))
        assert run_cli("mine-rules", "--out", tmp_path / "r.txt") == 0
