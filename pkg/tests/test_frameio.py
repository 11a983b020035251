"""Tests for frame persistence: display quantization, the raw float32
stack format with its JSON sidecar, and PNG frame directories.  Both
on-disk forms must be byte-reproducible from (params, grid, seed)."""

import hashlib
import json
import math
import os

import numpy as np
import pytest

from mclab import MCParams
from mclab.frameio import (
    QUANT_GAIN,
    QUANT_OFFSET,
    quantize_frames,
    read_png_dir,
    read_raw_stack,
    write_png_dir,
    write_raw_stack,
)
from mclab.grid import GridSpec
from mclab.synth import FrameStack, synth_frames

SEED_IO = 42100

GRID = GridSpec(nx=16, ny=16, ppd=8.0, fps=50.0)
PARAMS = MCParams(v0=(2.0, 0.0), theta0=0.5, sigma_theta=math.pi / 12,
                  z0=1.0, sigma_z=0.25, sigma_r=1.0)


def _stack():
    return synth_frames(PARAMS, GRID, 5, SEED_IO)


# ----------------------------------------------------------------------------
# quantization

def test_quantization_maps_sigma_units_to_gray_levels():
    sigma = 2.5
    values = np.array([[-3.0, -1.0, 0.0, 1.0, 2.0, 3.0]]) * sigma
    u8, used = quantize_frames(values[None, :, :], sigma=sigma)
    assert used == sigma
    assert u8.dtype == np.uint8
    expected = [0, 128 - 48, 128, 128 + 48, 128 + 96, 255]
    np.testing.assert_array_equal(u8[0, 0], expected)


def test_quantization_measures_sigma_from_the_stack():
    rng = np.random.default_rng(SEED_IO)
    frames = 3.0 * rng.standard_normal((4, 8, 8))
    u8, used = quantize_frames(frames)
    assert used == pytest.approx(frames.std())
    keep = np.abs(frames / used) < 2.0
    back = (u8[keep].astype(float) - QUANT_OFFSET) / QUANT_GAIN
    # inside the unclipped range the mapping is linear to half a gray level
    np.testing.assert_allclose(back, (frames / used)[keep],
                               atol=0.5 / QUANT_GAIN)


def test_quantizing_silence_gives_mid_gray():
    u8, used = quantize_frames(np.zeros((2, 4, 4)))
    assert used == 1.0
    assert np.all(u8 == 128)


# ----------------------------------------------------------------------------
# raw stack format

def test_raw_round_trip_preserves_frames_and_provenance(tmp_path):
    stack = _stack()
    raw_path, meta_path = write_raw_stack(stack, tmp_path / "demo")
    assert raw_path.name == "demo.mcraw"
    assert meta_path.name == "demo.mcraw.json"
    assert os.path.getsize(raw_path) == 5 * 16 * 16 * 4

    meta = json.loads(meta_path.read_text())
    assert meta["dtype"] == "<f4"
    assert meta["shape"] == [5, 16, 16]

    loaded = read_raw_stack(tmp_path / "demo")
    np.testing.assert_array_equal(loaded.frames,
                                  stack.frames.astype("<f4"))
    assert loaded.grid == stack.grid
    assert loaded.params == stack.params
    assert loaded.seed == stack.seed


def test_raw_write_is_byte_reproducible(tmp_path):
    h = []
    for name in ("a", "b"):
        raw_path, meta_path = write_raw_stack(_stack(), tmp_path / name)
        h.append((hashlib.sha256(raw_path.read_bytes()).hexdigest(),
                  meta_path.read_text()))
    assert h[0] == h[1]


# ----------------------------------------------------------------------------
# PNG directory format

def test_png_dir_round_trip(tmp_path):
    stack = _stack()
    out = tmp_path / "movie"
    write_png_dir(stack, out)

    names = sorted(p.name for p in out.iterdir())
    assert "meta.json" in names
    pngs = [n for n in names if n.endswith(".png")]
    assert len(pngs) == 5

    meta = json.loads((out / "meta.json").read_text())
    q = meta["quantization"]
    assert q["offset"] == QUANT_OFFSET
    assert q["gain"] == QUANT_GAIN
    assert q["sigma_i"] > 0.0
    assert meta["seed"] == SEED_IO
    assert meta["n_frames"] == 5

    frames_u8, meta2 = read_png_dir(out)
    assert meta2 == meta
    expected, _ = quantize_frames(stack.frames, sigma=q["sigma_i"])
    np.testing.assert_array_equal(frames_u8, expected)


def test_png_dir_is_byte_reproducible(tmp_path):
    digests = []
    for name in ("first", "second"):
        out = tmp_path / name
        write_png_dir(_stack(), out)
        acc = hashlib.sha256()
        for p in sorted(out.iterdir()):
            acc.update(p.name.encode())
            acc.update(p.read_bytes())
        digests.append(acc.hexdigest())
    assert digests[0] == digests[1]
