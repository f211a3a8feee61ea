from dataclasses import replace

import numpy as np
import pytest

from mobiattn.config import DataConfig, RunConfig, load_config, parse_config
from mobiattn.data import load_images, scan_dataset, synth_dataset
from mobiattn.errors import ConfigError, DatasetError, ParameterError
from mobiattn.imageio import encode_pnm, read_image
from mobiattn.model import BlockSpec, ModelSpec
from mobiattn.preprocess import AugmentConfig
from mobiattn.train import TrainConfig


@pytest.fixture(scope="module")
def synth_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    synth_dataset(root, classes=5, per_class=100, size=16, noise=0.05, seed=1)
    return root


class TestScan:
    def test_split_counts(self, synth_root):
        idx = scan_dataset(synth_root, 0.8, seed=0)
        assert idx.class_names == [f"class_{c:02d}" for c in range(5)]
        assert idx.counts("train") == [80] * 5 and idx.counts("test") == [20] * 5
        assert idx.counts("val") == [0] * 5

    def test_val_carve(self, synth_root):
        idx = scan_dataset(synth_root, 0.8, seed=0, val_fraction=0.25)
        assert idx.counts("val") == [20] * 5 and idx.counts("train") == [60] * 5

    def test_deterministic_and_seeded(self, synth_root):
        a = scan_dataset(synth_root, 0.8, seed=3)
        b = scan_dataset(synth_root, 0.8, seed=3)
        c = scan_dataset(synth_root, 0.8, seed=4)
        assert [s.split for s in a.samples] == [s.split for s in b.samples]
        assert [s.split for s in a.samples] != [s.split for s in c.samples]
        assert {s.path for s in a.split("train")}.isdisjoint({s.path for s in a.split("test")})

    def test_all_train(self, synth_root):
        idx = scan_dataset(synth_root, 1.0)
        assert idx.counts("test") == [0] * 5 and sum(idx.counts("train")) == 500

    def test_errors(self, tmp_path):
        with pytest.raises(DatasetError, match="does not exist"):
            scan_dataset(tmp_path / "missing")
        with pytest.raises(DatasetError, match="no class"):
            scan_dataset(tmp_path)
        (tmp_path / "a").mkdir()
        (tmp_path / "a" / "notes.txt").write_text("x")
        with pytest.raises(DatasetError, match="no PGM/PPM"):
            scan_dataset(tmp_path)
        with pytest.raises(ParameterError):
            scan_dataset(tmp_path, train_fraction=0.0)

    def test_corrupt_image_names_path(self, tmp_path):
        (tmp_path / "a").mkdir()
        bad = tmp_path / "a" / "x.ppm"
        bad.write_bytes(b"P6\n4 4\n255\n\0\0")
        idx = scan_dataset(tmp_path, 1.0)
        with pytest.raises(DatasetError, match="x.ppm"):
            load_images(idx.samples, (3, 4, 4))


class TestLoad:
    def test_shapes_and_range(self, synth_root):
        idx = scan_dataset(synth_root, 0.8)
        x, y = load_images(idx.split("test")[:10], (3, 8, 8))
        assert x.shape == (10, 3, 8, 8) and x.min() >= 0 and x.max() <= 1
        assert y.tolist() == [s.label for s in idx.split("test")[:10]]

    def test_gray_replicated(self, tmp_path):
        synth_dataset(tmp_path, classes=2, per_class=2, size=4, channels=1)
        idx = scan_dataset(tmp_path, 1.0)
        x, _ = load_images(idx.samples, (3, 4, 4))
        assert np.array_equal(x[:, 0], x[:, 1]) and np.array_equal(x[:, 1], x[:, 2])

    def test_channel_mismatch(self, tmp_path):
        synth_dataset(tmp_path, classes=2, per_class=2, size=4)
        with pytest.raises(DatasetError, match="channels"):
            load_images(scan_dataset(tmp_path, 1.0).samples, (1, 4, 4))


class TestSynth:
    def test_noise_free_samples_identical(self, tmp_path):
        synth_dataset(tmp_path, classes=2, per_class=3, size=8, noise=0.0)
        imgs = [read_image(p) for p in sorted((tmp_path / "class_00").iterdir())]
        assert all(np.array_equal(imgs[0], im) for im in imgs)
        other = read_image(sorted((tmp_path / "class_01").iterdir())[0])
        assert not np.array_equal(imgs[0], other)

    def test_deterministic_bytes(self, tmp_path):
        synth_dataset(tmp_path / "a", classes=2, per_class=2, size=8, seed=5)
        synth_dataset(tmp_path / "b", classes=2, per_class=2, size=8, seed=5)
        for p in (tmp_path / "a").rglob("*.ppm"):
            assert p.read_bytes() == (tmp_path / "b" / p.relative_to(tmp_path / "a")).read_bytes()

    def test_nearest_centroid_separates(self, synth_root):
        idx = scan_dataset(synth_root, 0.8)
        xtr, ytr = load_images(idx.split("train"), (3, 16, 16))
        xte, yte = load_images(idx.split("test"), (3, 16, 16))
        centroids = np.stack([xtr[ytr == c].mean(axis=0).ravel() for c in range(5)])
        d = ((xte.reshape(len(xte), 1, -1) - centroids[None]) ** 2).sum(axis=2)
        assert np.mean(d.argmin(axis=1) == yte) == 1.0

    def test_invalid(self, tmp_path):
        with pytest.raises(ParameterError):
            synth_dataset(tmp_path, classes=1)
        with pytest.raises(ParameterError):
            synth_dataset(tmp_path, noise=-0.1)


class TestConfig:
    def test_defaults(self):
        cfg = parse_config("")
        assert cfg.model == ModelSpec() and cfg.train == TrainConfig()
        assert cfg.augment == AugmentConfig() and cfg.data == DataConfig()

    def test_round_trip(self, tmp_path):
        cfg = RunConfig(
            model=ModelSpec(input_shape=(3, 32, 32), blocks=(BlockSpec(8, 2, 5), BlockSpec(12)),
                            attention="spatial", placement="per-block", reduction=4, num_classes=3),
            train=TrainConfig(batch_size=7, epochs=3, learning_rate=0.01, seed=9),
            augment=AugmentConfig(rotation_max_deg=5.0, scale_range=(0.95, 1.05), seed=2),
            data=DataConfig(0.75, 4),
        )
        path = tmp_path / "run.cfg"
        path.write_text(cfg.to_text())
        assert load_config(path) == cfg
        off = replace(cfg, augment=None)
        assert parse_config(off.to_text()) == off

    def test_partial_override(self):
        cfg = parse_config("# comment\nmodel.attention = channel\ntrain.epochs=5\naugment.enabled=false\n")
        assert cfg.model.attention == "channel" and cfg.train.epochs == 5 and cfg.augment is None

    @pytest.mark.parametrize("text,match", [
        ("model.colour=red\n", "unknown"),
        ("train.epochs=5\ntrain.epochs=6\n", "duplicate"),
        ("train.epochs=five\n", "train.epochs"),
        ("no equals sign\n", "key=value"),
        ("model.attention=both\n", "attention"),
        ("augment.enabled=maybe\n", "augment.enabled"),
        ("data.train_fraction=1.5\n", "train_fraction"),
        ("augment.rotation_max_deg=-3\n", "rotation"),
        ("train.batch_size=0\n", "batch_size"),
    ])
    def test_rejects(self, text, match):
        with pytest.raises(ConfigError, match=match):
            parse_config(text)


def test_encode_pnm_used_by_synth_is_readable(tmp_path):
    p = tmp_path / "one.ppm"
    p.write_bytes(encode_pnm(np.full((2, 2, 3), 255, dtype=np.uint8)))
    assert np.all(read_image(p) == 255)
