import json

import numpy as np
import pytest

from riscade.cli import main, parse_and_validate

TINY_CONFIG = {
    "schema_version": 1,
    "seed": 3,
    "channel": {"n_bs": 2, "n_ris": 4},
    "sounding": {"n_uses": 3, "n_combiner": 2, "snr_db": 20.0},
    "network": {"n_layers": 2, "n_epochs": 2, "batch_size": 16},
    "data": {"n_train": 48, "n_test": 12},
    "study": {"k_unfold": [2, 3], "k_ls": 4},
}


@pytest.fixture()
def tiny_config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY_CONFIG))
    return str(path)


def run_cli(args):
    return main(list(args))


class TestParseAndValidate:
    def test_seed_flag_overrides_config(self, tiny_config):
        rc = parse_and_validate(["train", "--config", tiny_config, "--seed", "7"])
        assert rc.seed == 7
        assert rc.subcommand == "train"

    def test_seed_from_config(self, tiny_config):
        rc = parse_and_validate(["train", "--config", tiny_config])
        assert rc.seed == 3
        assert rc.settings.channel.n_bs == 2
        assert rc.settings.schedule.n_epochs == 2

    def test_profile_paper_sizes(self):
        rc = parse_and_validate(["train", "--profile", "paper"])
        assert rc.settings.channel.n_bs == 16
        assert rc.settings.channel.n_ris == 32
        assert rc.settings.n_layers == 15
        assert rc.settings.n_train == 100_000

    def test_profile_desk_default(self):
        rc = parse_and_validate(["train"])
        assert rc.profile == "desk"
        assert rc.settings.channel.n_bs == 8
        assert rc.settings.n_layers == 8

    def test_missing_config_exit_3_names_path(self, tmp_path, capsys):
        missing = str(tmp_path / "nope.json")
        assert run_cli(["train", "--config", missing]) == 3
        assert missing in capsys.readouterr().err

    def test_unknown_flag_exit_2(self):
        with pytest.raises(SystemExit) as err:
            parse_and_validate(["train", "--frobnicate"])
        assert err.value.code == 2

    def test_unknown_subcommand_exit_2(self):
        with pytest.raises(SystemExit) as err:
            parse_and_validate(["transmogrify"])
        assert err.value.code == 2

    def test_unknown_config_key_exit_3(self, tmp_path):
        doc = dict(TINY_CONFIG)
        doc["typo_key"] = 1
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        assert run_cli(["train", "--config", str(path)]) == 3

    def test_schema_violation_names_field(self, tmp_path, capsys):
        doc = json.loads(json.dumps(TINY_CONFIG))
        doc["channel"]["n_bs"] = -2
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        assert run_cli(["train", "--config", str(path)]) == 3
        assert "channel.n_bs" in capsys.readouterr().err

    def test_missing_schema_version(self, tmp_path):
        doc = dict(TINY_CONFIG)
        doc.pop("schema_version")
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        assert run_cli(["train", "--config", str(path)]) == 3

    def test_baseline_rejects_unfold_method(self):
        with pytest.raises(SystemExit) as err:
            parse_and_validate(["baseline", "--method", "unfold"])
        assert err.value.code == 2

    def test_output_dir_from_environment(self, tiny_config):
        rc = parse_and_validate(
            ["train", "--config", tiny_config],
            environ={"RISCADE_OUTPUT_DIR": "/tmp/riscade-out"},
        )
        assert rc.output_dir == "/tmp/riscade-out"


class TestDispatch:
    def test_gen_data_writes_arrays(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        code = run_cli(
            ["gen-data", "--config", tiny_config, "--output-dir", str(out)]
        )
        assert code == 0
        data = np.load(out / "dataset" / "observations.npy")
        assert data.shape == (48, 6)
        meta = json.loads((out / "dataset" / "meta.json").read_text())
        assert meta["n_bs"] == 2 and meta["n_uses"] == 3

    def test_train_eval_roundtrip(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        assert run_cli(
            ["train", "--config", tiny_config, "--output-dir", str(out)]
        ) == 0
        ckpt = out / "unfold.ckpt"
        assert ckpt.exists()
        assert (out / "loss_history.csv").exists()
        # loading and re-saving reproduces the file byte for byte
        from riscade import load_checkpoint, save_checkpoint

        params = load_checkpoint(ckpt)
        resaved = tmp_path / "resaved.ckpt"
        save_checkpoint(params, resaved)
        assert ckpt.read_bytes() == resaved.read_bytes()
        code = run_cli(
            [
                "eval",
                "--config",
                tiny_config,
                "--output-dir",
                str(out),
                "--checkpoint",
                str(ckpt),
            ]
        )
        assert code == 0
        lines = (out / "eval_results.csv").read_text().strip().split("\n")
        assert lines[0] == "curve,test_snr_db,nmse,n_samples"
        assert len(lines) == 1 + 5

    def test_eval_corrupt_checkpoint_exit_4(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        run_cli(["train", "--config", tiny_config, "--output-dir", str(out)])
        ckpt = out / "unfold.ckpt"
        blob = bytearray(ckpt.read_bytes())
        blob[30] ^= 0x55
        ckpt.write_bytes(bytes(blob))
        code = run_cli(
            [
                "eval",
                "--config",
                tiny_config,
                "--output-dir",
                str(out),
                "--checkpoint",
                str(ckpt),
            ]
        )
        assert code == 4

    def test_baseline_ls_noiseless_exact(self, tmp_path):
        # square invertible toy config, noiseless test grid
        doc = {
            "schema_version": 1,
            "seed": 1,
            "channel": {"n_bs": 2, "n_ris": 4},
            "sounding": {"n_uses": 4, "n_combiner": 2},
            "data": {"n_train": 8, "n_test": 32},
            "test_snrs_db": ["inf"],
        }
        cfg = tmp_path / "toy.json"
        cfg.write_text(json.dumps(doc))
        out = tmp_path / "out"
        code = run_cli(
            ["baseline", "--method", "ls", "--config", str(cfg), "--output-dir", str(out)]
        )
        assert code == 0
        lines = (out / "baseline_ls.csv").read_text().strip().split("\n")
        assert len(lines) == 2
        nmse = float(lines[1].split(",")[2])
        assert nmse <= 1e-20

    @pytest.mark.parametrize("method", ["gd", "svt"])
    def test_baseline_iterative_methods_run(self, tmp_path, method):
        doc = {
            "schema_version": 1,
            "seed": 2,
            "channel": {"n_bs": 2, "n_ris": 4},
            "sounding": {"n_uses": 4, "n_combiner": 2},
            "data": {"n_train": 8, "n_test": 6},
            "test_snrs_db": [10.0],
        }
        cfg = tmp_path / "toy.json"
        cfg.write_text(json.dumps(doc))
        out = tmp_path / "out"
        code = run_cli(
            [
                "baseline",
                "--method",
                method,
                "--config",
                str(cfg),
                "--output-dir",
                str(out),
                "--jobs",
                "2",
            ]
        )
        assert code == 0
        assert (out / f"baseline_{method}.csv").exists()

    def test_study_row_count_and_reproducibility(self, tiny_config, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        assert run_cli(
            ["study", "--name", "overhead", "--config", tiny_config,
             "--output-dir", str(out_a)]
        ) == 0
        assert run_cli(
            ["study", "--name", "overhead", "--config", tiny_config,
             "--output-dir", str(out_b)]
        ) == 0
        csvs_a = sorted(out_a.glob("overhead_*.csv"))
        csvs_b = sorted(out_b.glob("overhead_*.csv"))
        assert len(csvs_a) == len(csvs_b) == 1
        text = csvs_a[0].read_text()
        # 3 curves x 5 test SNRs under desk-style defaults
        assert len(text.strip().split("\n")) == 1 + 15
        assert csvs_a[0].read_bytes() == csvs_b[0].read_bytes()
        # trained-curve checkpoints are emitted and byte-identical
        ckpts_a = sorted(p.name for p in out_a.glob("overhead_*.ckpt"))
        ckpts_b = sorted(p.name for p in out_b.glob("overhead_*.ckpt"))
        assert ckpts_a == ckpts_b and len(ckpts_a) == 2
        for name in ckpts_a:
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_study_seed_changes_outputs(self, tiny_config, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        run_cli(["study", "--name", "overhead", "--config", tiny_config,
                 "--output-dir", str(out_a)])
        run_cli(["study", "--name", "overhead", "--config", tiny_config,
                 "--seed", "99", "--output-dir", str(out_b)])
        a = sorted(out_a.glob("overhead_*.csv"))[0].read_bytes()
        b = sorted(out_b.glob("overhead_*.csv"))[0].read_bytes()
        assert a != b

    def test_outputs_stay_inside_output_dir(self, tiny_config, tmp_path, monkeypatch):
        workdir = tmp_path / "cwd"
        workdir.mkdir()
        out = tmp_path / "out"
        monkeypatch.chdir(workdir)
        run_cli(["train", "--config", tiny_config, "--output-dir", str(out)])
        assert list(workdir.iterdir()) == []
