import json

import numpy as np
import pytest

from cumamba.checkpoint import load_checkpoint
from cumamba.cli import main
from cumamba.config import format_config, parse_config_text, ConfigError, RunConfig
from cumamba.imageio import read_image, write_image


TOY_CONFIG = """
# toy run
model.levels = 2
model.blocks_per_level = 1,1
model.base_width = 4
model.state_size = 2
model.patch_size = 16,16
model.scan_chunk = 16
train.steps = 2
train.batch_size = 1
train.lr_start = 1e-3
train.lr_end = 1e-5
train.log_interval = 1
data.image_size = 16
data.n_train = 3
data.n_test = 1
"""


class TestConfigFormat:
    def test_parse_round_trip(self):
        cfg = parse_config_text(TOY_CONFIG)
        assert cfg.model.levels == 2
        assert cfg.model.blocks_per_level == (1, 1)
        assert cfg.model.patch_size == (16, 16)
        assert cfg.train.lr_start == pytest.approx(1e-3)
        again = parse_config_text(format_config(cfg))
        assert again == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("model.dropout = 0.5")

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config_text("optimizer.lr = 1")

    def test_malformed_line_rejected(self):
        with pytest.raises(ConfigError, match="key=value"):
            parse_config_text("model.levels 4")

    def test_defaults_carry_stated_values(self):
        cfg = RunConfig()
        assert cfg.train.lr_start == 5e-5
        assert cfg.train.lr_end == 1e-6
        assert cfg.loss.charbonnier_eps == 1e-3
        assert cfg.loss.fourier_weight == 0.1
        assert cfg.model.levels == 4
        assert cfg.model.base_width == 32


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg_file = out / "cfg.txt"
    cfg_file.write_text(TOY_CONFIG)
    code = main(["train", "--config", str(cfg_file), "--out", str(out / "train")])
    assert code == 0
    return out / "train"


class TestCli:
    def test_unknown_flag_is_usage_error(self):
        assert main(["train", "--frobnicate", "--out", "/tmp/x"]) == 1

    def test_unknown_subcommand_is_usage_error(self):
        assert main(["transmogrify"]) == 1

    def test_train_writes_manifest_and_checkpoint(self, trained_run):
        assert (trained_run / "final.ckpt").exists()
        manifest = json.loads((trained_run / "manifest.json").read_text())
        assert manifest["command"] == "train"
        assert "config" in manifest and "seed" in manifest
        assert (trained_run / "metrics.csv").exists()
        assert (trained_run / "config.txt").exists()

    def test_missing_config_file_is_runtime_error(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "nope.txt"),
                     "--out", str(tmp_path / "o")]) == 2

    def test_infer_zero_init_checkpoint_is_identity(self, trained_run, tmp_path):
        # A fresh model checkpoint (0 steps) restores any image to itself.
        from cumamba.train import train_loop
        from cumamba.checkpoint import save_checkpoint
        cfg = parse_config_text(TOY_CONFIG)
        cfg.train.steps = 0
        ckpt, _ = train_loop(cfg)
        ckpt_path = tmp_path / "zero.ckpt"
        save_checkpoint(ckpt, ckpt_path)

        rng = np.random.default_rng(0)
        img = rng.uniform(0, 1, (16, 16, 3)).astype(np.float32)
        src = tmp_path / "in.ppm"
        dst = tmp_path / "out.ppm"
        write_image(src, img)
        code = main(["infer", "--checkpoint", str(ckpt_path), "--input", str(src),
                     "--output", str(dst), "--overlap", "0"])
        assert code == 0
        np.testing.assert_array_equal(read_image(dst), read_image(src))
        assert (tmp_path / "manifest.json").exists()

    def test_eval_identical_pairs_reports_perfect_scores(self, trained_run, tmp_path, capsys):
        data = tmp_path / "data"
        (data / "degraded").mkdir(parents=True)
        (data / "clean").mkdir()
        rng = np.random.default_rng(1)
        # Zero-step checkpoint: restoration is the identity, so identical
        # pairs must score SSIM 1 and infinite PSNR.
        from cumamba.train import train_loop
        from cumamba.checkpoint import save_checkpoint
        cfg = parse_config_text(TOY_CONFIG)
        cfg.train.steps = 0
        ckpt, _ = train_loop(cfg)
        ckpt_path = tmp_path / "zero.ckpt"
        save_checkpoint(ckpt, ckpt_path)
        for i in range(2):
            img = rng.uniform(0, 1, (16, 16, 3)).astype(np.float32)
            write_image(data / "degraded" / f"{i}.ppm", img)
            write_image(data / "clean" / f"{i}.ppm", img)
        out = tmp_path / "eval"
        code = main(["eval", "--checkpoint", str(ckpt_path), "--data", str(data),
                     "--out", str(out)])
        assert code == 0
        text = capsys.readouterr().out
        assert "inf" in text
        assert "1.0000" in text
        assert (out / "metrics.csv").exists()

    def test_eval_missing_data_dir_is_runtime_error(self, trained_run, tmp_path):
        assert main(["eval", "--checkpoint", str(trained_run / "final.ckpt"),
                     "--data", str(tmp_path / "nothing"),
                     "--out", str(tmp_path / "e")]) == 2

    def test_resume_from_checkpoint(self, trained_run, tmp_path):
        cfg_file = tmp_path / "cfg.txt"
        cfg_file.write_text(TOY_CONFIG.replace("train.steps = 2", "train.steps = 3"))
        code = main(["train", "--config", str(cfg_file),
                     "--resume", str(trained_run / "final.ckpt"),
                     "--out", str(tmp_path / "resumed")])
        assert code == 0
        final = load_checkpoint(tmp_path / "resumed" / "final.ckpt")
        assert final.step == 3

    def test_bench_writes_csv(self, tmp_path):
        out = tmp_path / "bench"
        code = main(["bench", "--out", str(out), "--reps", "3",
                     "--lmin", "6", "--lmax", "8", "--no-attention"])
        assert code == 0
        csv_text = (out / "bench.csv").read_text().splitlines()
        assert csv_text[0] == ("kernel,L,C,N,threads,repetitions,"
                               "t_median,t_min,t_max,throughput")
        assert len(csv_text) > 3
        assert (out / "manifest.json").exists()

    def test_bench_bad_grid_is_usage_error(self, tmp_path):
        assert main(["bench", "--out", str(tmp_path), "--lmin", "9", "--lmax", "6"]) == 1
