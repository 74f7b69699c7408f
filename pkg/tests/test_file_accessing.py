"""Tests for the dataset, checkpoint, bundle and report files."""

import json
import struct

import numpy as np
import pandas as pd
import pytest

from neurocalib.Modules import File_Accessing as fa
from neurocalib.Modules.Channel_Model import generate_dataset
from neurocalib.Modules.Neural_Network import init_mlp, mlp_forward
from neurocalib.Modules.General_Functions import DimensionError, FormatError


# ============================================================================
# DATASETS
# ============================================================================


class TestDatasetFile:
    """Tests for save_dataset and load_dataset."""

    def test_header_and_size(self, small_cfg, tmp_path):
        """The file starts with the magic, version, flags and dimensions."""
        dataset = generate_dataset(small_cfg, 3)
        path = tmp_path/"data"/"set.ncal"
        fa.save_dataset(dataset, path)
        data = path.read_bytes()
        assert data[:8] == b"NCALDSET"
        assert struct.unpack('<II', data[8:16]) == (1, 1)
        assert struct.unpack('<QQQQ', data[16:48]) == (8, 2, 2, 3)
        per_sample = 4*8*2+2*8*2
        assert len(data) == 48+3*per_sample*8

    def test_contents_survive(self, small_cfg, tmp_path):
        """Loading gives back the same channels and pilots."""
        dataset = generate_dataset(small_cfg, 4)
        path = tmp_path/"set.ncal"
        fa.save_dataset(dataset, path)
        loaded = fa.load_dataset(path, small_cfg)
        np.testing.assert_array_equal(loaded.H_UL.to_numpy(), dataset.H_UL.to_numpy())
        np.testing.assert_array_equal(loaded.H_DL.to_numpy(), dataset.H_DL.to_numpy())
        np.testing.assert_array_equal(loaded.Y_p.to_numpy(), dataset.Y_p.to_numpy())

    def test_without_pilots(self, small_cfg, tmp_path):
        """The pilot flag is cleared when there are no pilots."""
        path = tmp_path/"set.ncal"
        fa.save_dataset(generate_dataset(small_cfg, 2, with_pilots=False), path)
        assert struct.unpack('<II', path.read_bytes()[8:16]) == (1, 0)
        loaded = fa.load_dataset(path)
        assert loaded.Y_p is None
        assert (loaded.cfg.M, loaded.cfg.K, loaded.cfg.L) == (8, 2, 2)

    def test_bad_magic(self, tmp_path):
        """A file with another magic is rejected."""
        path = tmp_path/"bad.ncal"
        path.write_bytes(b"NOTADSET"+bytes(40))
        with pytest.raises(FormatError):
            fa.load_dataset(path)

    def test_truncated(self, small_cfg, tmp_path):
        """A file cut short is rejected."""
        path = tmp_path/"set.ncal"
        fa.save_dataset(generate_dataset(small_cfg, 2), path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(FormatError, match="Truncated"):
            fa.load_dataset(path)

    def test_trailing_bytes(self, small_cfg, tmp_path):
        """Extra bytes after the last sample are rejected."""
        path = tmp_path/"set.ncal"
        fa.save_dataset(generate_dataset(small_cfg, 2), path)
        path.write_bytes(path.read_bytes()+b"\x00")
        with pytest.raises(FormatError):
            fa.load_dataset(path)

    def test_dimension_mismatch(self, small_cfg, tmp_path):
        """A configuration with other dimensions is rejected."""
        path = tmp_path/"set.ncal"
        fa.save_dataset(generate_dataset(small_cfg, 2), path)
        with pytest.raises(DimensionError):
            fa.load_dataset(path, small_cfg.with_changes(M=6))


# ============================================================================
# CHECKPOINTS AND BUNDLES
# ============================================================================


class TestCheckpoints:
    """Tests for network checkpoints and model bundles."""

    def test_checkpoint_reproduces_outputs(self, tmp_path):
        """A reloaded network gives the same eval-mode outputs."""
        params = init_mlp([4, 6, 5, 4], seed=2)
        x = np.random.default_rng(0).standard_normal((32, 4))*3.0
        mlp_forward(params, x)
        params.eval()
        path = tmp_path/"net.ckpt"
        fa.save_checkpoint(params, path)
        loaded = fa.load_checkpoint(path)
        assert loaded.mode == "eval"
        assert loaded.layer_dims == [4, 6, 5, 4]
        np.testing.assert_array_equal(mlp_forward(loaded, x), mlp_forward(params, x))

    def test_checkpoint_header(self):
        """The checkpoint starts with its magic, version and layer dims."""
        data = fa.mlp_to_bytes(init_mlp([3, 5, 2]))
        assert data[:8] == b"NCALMLP\x00"
        assert struct.unpack('<II', data[8:16]) == (1, 3)
        assert struct.unpack('<3I', data[16:28]) == (3, 5, 2)

    def test_corrupt_checkpoint(self):
        """Wrong magic or a cut payload raise FormatError."""
        data = fa.mlp_to_bytes(init_mlp([3, 5, 2]))
        with pytest.raises(FormatError):
            fa.mlp_from_bytes(b"XXXXXXXX"+data[8:])
        with pytest.raises(FormatError):
            fa.mlp_from_bytes(data[:-4])

    def test_bundle(self, tmp_path):
        """Bundles keep every network and the manifest."""
        networks = {"a": init_mlp([2, 3, 2]), "b": init_mlp([4, 4])}
        path = tmp_path/"models"/"m.ncm"
        fa.save_bundle(networks, {"method": "neural_calibration", "M": 4}, path)
        loaded, manifest = fa.load_bundle(path)
        assert set(loaded) == {"a", "b"}
        assert manifest == {"method": "neural_calibration", "M": 4}
        np.testing.assert_array_equal(loaded["b"].weights[0], networks["b"].weights[0])

    def test_bundle_garbage(self, tmp_path):
        """A file that isn't a bundle raises FormatError."""
        path = tmp_path/"m.ncm"
        path.write_bytes(b"definitely not a bundle")
        with pytest.raises(FormatError):
            fa.load_bundle(path)


# ============================================================================
# REPORTS
# ============================================================================


class TestReports:
    """Tests for write_report."""

    def test_csv_and_manifest(self, tmp_path):
        """The CSV has no index column and the manifest lands next to it."""
        table = pd.DataFrame([{"method": "zf", "value": 1.5}])
        path = fa.write_report(table, tmp_path/"out"/"report.csv", {"seed": 3})
        assert path.read_text(encoding="utf-8") == "method,value\nzf,1.5\n"
        assert json.loads((tmp_path/"out"/"report.json").read_text()) == {"seed": 3}

    def test_without_manifest(self, tmp_path):
        """No manifest is written unless given."""
        fa.write_report(pd.DataFrame({"a": [1]}), tmp_path/"r.csv")
        assert not (tmp_path/"r.json").exists()
