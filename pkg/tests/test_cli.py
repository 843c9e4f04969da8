import numpy as np
import pytest
from PIL import Image

from conftest import toy_rgb, write_toy_dataset
from ucapsnet.cli import dispatch, parse_config_file
from ucapsnet.colourspace import save_rgb

TRAIN_CONFIG = """
# desk-scale smoke recipe
variant=q
epochs=1
batch_size=2
learning_rate=1e-3
input_side=32
base_channels=8
seed=9
deterministic=true
"""


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One tiny CLI training run shared by the inference-command tests."""
    root = tmp_path_factory.mktemp("cli")
    manifest = write_toy_dataset(root / "data", 2, side=48)
    cfg_file = root / "train.cfg"
    cfg_file.write_text(TRAIN_CONFIG)
    out_dir = root / "run"
    code = dispatch([
        "train", "--manifest", str(manifest), "--out", str(out_dir),
        "--config", str(cfg_file),
    ])
    assert code == 0
    return {
        "root": root,
        "manifest": manifest,
        "ckpt": out_dir / "checkpoint.bin",
        "metrics": out_dir / "metrics.csv",
    }


class TestPaletteCommand:
    def test_writes_reference_palette(self, tmp_path, capsys):
        out = tmp_path / "palette.csv"
        code = dispatch(["palette", "--grid", "10", "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "index,a_center,b_center"
        assert len(lines) == 1 + 313
        assert "313 bins" in capsys.readouterr().out


class TestUsageErrors:
    def test_missing_required_flag(self, capsys):
        code = dispatch(["palette"])
        assert code == 1
        err = capsys.readouterr().err
        assert "usage" in err

    def test_unknown_command(self, capsys):
        assert dispatch(["frobnicate"]) == 1

    def test_unknown_config_key(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("not_a_key=1\n")
        code = dispatch([
            "train", "--manifest", "m.txt", "--out", str(tmp_path), "--config", str(bad),
        ])
        assert code == 1
        assert "valid keys" in capsys.readouterr().err

    def test_config_parser_accepts_comments(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("seed=4  # inline comment\n# full line\n\nepochs=2\n")
        assert parse_config_file(cfg) == {"seed": 4, "epochs": 2}

    def test_runtime_error_exit_code(self, capsys, tmp_path):
        code = dispatch(["inspect", "--ckpt", str(tmp_path / "missing.bin")])
        assert code == 2
        assert "error" in capsys.readouterr().err


class TestTrainCommand:
    def test_outputs_and_effective_config(self, trained, capsys):
        assert trained["ckpt"].exists()
        lines = trained["metrics"].read_text().strip().splitlines()
        assert lines[0] == "step,epoch,d_loss,g_loss,l1,cl,total"
        assert len(lines) == 2  # one step: 2 images, batch 2, 1 epoch


class TestResume:
    def test_resume_without_flags_uses_stored_recipe(self, trained, tmp_path, capsys):
        out_dir = tmp_path / "resumed"
        code = dispatch([
            "train", "--manifest", str(trained["manifest"]), "--out", str(out_dir),
            "--ckpt", str(trained["ckpt"]),
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "recipe=from checkpoint" in out
        # Stored recipe already ran its single epoch; resuming adds no steps.
        lines = (out_dir / "metrics.csv").read_text().strip().splitlines()
        assert len(lines) == 1
        assert (out_dir / "checkpoint.bin").exists()


class TestColouriseCommand:
    def test_single_image_dimensions_preserved(self, trained, tmp_path):
        gray = np.repeat(toy_rgb(7, side=40)[:, :, :1], 3, axis=2)
        src = tmp_path / "gray.png"
        save_rgb(src, gray)
        dst = tmp_path / "coloured.png"
        code = dispatch([
            "colourise", "--ckpt", str(trained["ckpt"]), "--in", str(src), "--out", str(dst),
        ])
        assert code == 0
        with Image.open(dst) as im:
            assert im.size == (40, 40)

    def test_folder_mode(self, trained, tmp_path):
        src_dir = tmp_path / "imgs"
        src_dir.mkdir()
        for i in range(2):
            save_rgb(src_dir / f"img_{i}.png", toy_rgb(i, side=32))
        out_dir = tmp_path / "out"
        code = dispatch([
            "colourise", "--ckpt", str(trained["ckpt"]),
            "--in", str(src_dir), "--out", str(out_dir),
        ])
        assert code == 0
        assert sorted(p.name for p in out_dir.iterdir()) == [
            "img_0_colour.png", "img_1_colour.png",
        ]


class TestEvaluateCommand:
    def test_report_written(self, trained, tmp_path, capsys):
        out = tmp_path / "report.csv"
        code = dispatch([
            "evaluate", "--ckpt", str(trained["ckpt"]),
            "--manifest", str(trained["manifest"]), "--out", str(out),
        ])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "path,psnr_db"
        assert sum(1 for l in lines[1:] if l and not l.startswith("#")) == 2
        assert "effective config" in capsys.readouterr().out


class TestGalleryCommand:
    def test_grid_written(self, trained, tmp_path):
        out = tmp_path / "grid.png"
        code = dispatch([
            "gallery", "--ckpt", str(trained["ckpt"]),
            "--manifest", str(trained["manifest"]), "--out", str(out), "--limit", "1",
        ])
        assert code == 0
        with Image.open(out) as im:
            assert im.size == (3 * 32 + 4 * 4, 32 + 2 * 4)


class TestInspectCommand:
    def test_prints_header_and_blocks(self, trained, capsys):
        code = dispatch(["inspect", "--ckpt", str(trained["ckpt"])])
        assert code == 0
        out = capsys.readouterr().out
        assert "format version: 1" in out
        assert "variant = q" in out
        assert "gen/head.weight" in out


def test_threads_env_respected(monkeypatch, tmp_path):
    import torch

    monkeypatch.setenv("UCAPS_THREADS", "1")
    dispatch(["inspect", "--ckpt", str(tmp_path / "nope.bin")])
    assert torch.get_num_threads() == 1
