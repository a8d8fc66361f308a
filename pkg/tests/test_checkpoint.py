import struct

import numpy as np
import pytest

from graphsparse.baseline import DenseGCN, DenseGCNConfig
from graphsparse.checkpoint import load_model, read_checkpoint, save_checkpoint
from graphsparse.errors import CheckpointError
from graphsparse.model import GSNet, GSNetConfig


@pytest.fixture
def gsnet():
    return GSNet(GSNetConfig(N=5, d=4, L=2, seed=1))


class TestRoundTrip:
    def test_gsnet(self, tmp_path, gsnet):
        p = tmp_path / "m.bin"
        save_checkpoint(p, gsnet.tag, gsnet.config, gsnet.params)
        m = load_model(p, expected_config=gsnet.config, expected_tag="gsnet")
        assert isinstance(m, GSNet) and m.config == gsnet.config
        for k, v in gsnet.params.items():
            assert np.array_equal(m.params[k], v)
        X = np.random.default_rng(0).normal(size=(5, 12))
        assert np.array_equal(m.forward(X).value, gsnet.forward(X).value)

    def test_dense(self, tmp_path):
        d = DenseGCN(DenseGCNConfig(N=4, d=3))
        p = tmp_path / "d.bin"
        save_checkpoint(p, d.tag, d.config, d.params)
        tag, cfg, params = read_checkpoint(p)
        assert tag == "dense_gcn" and cfg == d.config.to_dict()
        assert isinstance(load_model(p), DenseGCN)

    def test_bytes_deterministic(self, tmp_path, gsnet):
        save_checkpoint(tmp_path / "a", gsnet.tag, gsnet.config, gsnet.params)
        save_checkpoint(tmp_path / "b", gsnet.tag, gsnet.config, gsnet.params)
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_layout(self, tmp_path):
        p = tmp_path / "x"
        save_checkpoint(p, "gsnet", {"N": 1}, {"W": np.array([[1.5, -2.0]])})
        raw = p.read_bytes()
        assert raw.startswith(b"GSNCKPT 1 gsnet\n{\"N\": 1}\n")
        body = raw[len(b"GSNCKPT 1 gsnet\n{\"N\": 1}\n"):]
        assert struct.unpack("<I", body[:4]) == (1,)
        assert struct.unpack("<H", body[4:6]) == (1,) and body[6:7] == b"W"
        assert struct.unpack("<II", body[7:15]) == (1, 2)
        assert struct.unpack("<2d", body[15:]) == (1.5, -2.0)


class TestRejects:
    def test_config_mismatch(self, tmp_path, gsnet):
        p = tmp_path / "m.bin"
        save_checkpoint(p, gsnet.tag, gsnet.config, gsnet.params)
        with pytest.raises(CheckpointError, match="N"):
            load_model(p, expected_config=GSNetConfig(N=6, d=4, L=2, seed=1))

    def test_tag_mismatch(self, tmp_path, gsnet):
        p = tmp_path / "m.bin"
        save_checkpoint(p, gsnet.tag, gsnet.config, gsnet.params)
        with pytest.raises(CheckpointError, match="gsnet"):
            load_model(p, expected_tag="dense_gcn")

    def test_truncated(self, tmp_path, gsnet):
        p = tmp_path / "m.bin"
        save_checkpoint(p, gsnet.tag, gsnet.config, gsnet.params)
        p.write_bytes(p.read_bytes()[:-9])
        with pytest.raises(CheckpointError):
            read_checkpoint(p)

    def test_trailing(self, tmp_path, gsnet):
        p = tmp_path / "m.bin"
        save_checkpoint(p, gsnet.tag, gsnet.config, gsnet.params)
        p.write_bytes(p.read_bytes() + b"\0")
        with pytest.raises(CheckpointError):
            read_checkpoint(p)

    def test_not_a_checkpoint(self, tmp_path):
        p = tmp_path / "junk"
        p.write_bytes(b"hello world\n{}\n")
        with pytest.raises(CheckpointError):
            read_checkpoint(p)

    def test_bad_version(self, tmp_path):
        p = tmp_path / "v"
        p.write_bytes(b"GSNCKPT 9 gsnet\n{}\n\0\0\0\0")
        with pytest.raises(CheckpointError, match="version"):
            read_checkpoint(p)

    def test_unknown_tag(self, tmp_path):
        p = tmp_path / "t"
        save_checkpoint(p, "mystery", {}, {})
        with pytest.raises(CheckpointError, match="mystery"):
            load_model(p)
