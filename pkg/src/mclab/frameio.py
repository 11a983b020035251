"""Frame persistence: display quantization, raw float32 stacks with JSON
sidecars, and PNG frame directories.

Both on-disk forms are byte-reproducible from (params, grid, seed): the
raw form keeps full precision for analysis, the PNG form is the 8-bit
display encoding used by the experiment service.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from PIL import Image

from .errors import SessionFormatError
from .grid import GridSpec
from .params import params_from_config, params_to_config
from .synth import FrameStack

__all__ = [
    "QUANT_GAIN",
    "QUANT_OFFSET",
    "quantize_frames",
    "read_png_dir",
    "read_raw_stack",
    "write_png_dir",
    "write_raw_stack",
]

# mid-gray anchor and gray levels per unit of luminance standard deviation
QUANT_OFFSET = 128.0
QUANT_GAIN = 48.0


def quantize_frames(frames: np.ndarray,
                    sigma: Optional[float] = None
                    ) -> Tuple[np.ndarray, float]:
    """Map real luminance to 8-bit gray around mid-gray.

    pixel = clip(round(128 + 48 * I / sigma), 0, 255).  sigma defaults to
    the standard deviation of the stack itself; a silent stack falls back
    to sigma 1 and renders uniform mid-gray.  Returns (uint8 array, the
    sigma actually used): persist that sigma, it is part of the encoding.
    """
    frames = np.asarray(frames, dtype=float)
    if sigma is None:
        sigma = float(frames.std())
        if sigma == 0.0:
            sigma = 1.0
    levels = np.rint(QUANT_OFFSET + QUANT_GAIN * frames / sigma)
    return np.clip(levels, 0.0, 255.0).astype(np.uint8), float(sigma)


def _sidecar_meta(stack: FrameStack) -> dict:
    return {
        "grid": stack.grid.to_dict(),
        "params": params_to_config(stack.params),
        "seed": stack.seed,
        "n_frames": int(stack.frames.shape[0]),
    }


def write_raw_stack(stack: FrameStack, path) -> Tuple[Path, Path]:
    """Write frames as little-endian float32, frame-major row-major, to
    <path>.mcraw with a <path>.mcraw.json sidecar.  Returns both paths."""
    base = Path(path)
    raw_path = base.with_name(base.name + ".mcraw")
    meta_path = base.with_name(base.name + ".mcraw.json")
    data = np.ascontiguousarray(stack.frames, dtype="<f4")
    raw_path.write_bytes(data.tobytes())
    meta = _sidecar_meta(stack)
    meta["dtype"] = "<f4"
    meta["shape"] = list(stack.frames.shape)
    meta["order"] = "frame-major, row-major"
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return raw_path, meta_path


def read_raw_stack(path) -> FrameStack:
    """Load a stack written by write_raw_stack; frames come back float32."""
    base = Path(path)
    raw_path = base.with_name(base.name + ".mcraw")
    meta_path = base.with_name(base.name + ".mcraw.json")
    try:
        meta = json.loads(meta_path.read_text())
        shape = tuple(meta["shape"])
        dtype = meta["dtype"]
        grid = GridSpec.from_dict(meta["grid"])
        params = params_from_config(meta["params"])
        seed = meta["seed"]
    except (KeyError, ValueError, OSError) as exc:
        raise SessionFormatError(f"bad raw-stack sidecar {meta_path}: "
                                 f"{exc}") from exc
    data = np.frombuffer(raw_path.read_bytes(), dtype=dtype)
    if data.size != int(np.prod(shape)):
        raise SessionFormatError(
            f"raw stack {raw_path} holds {data.size} samples, sidecar "
            f"promises {int(np.prod(shape))}")
    return FrameStack(frames=data.reshape(shape), grid=grid,
                      params=params, seed=seed)


def write_png_dir(stack: FrameStack, out_dir,
                  sigma: Optional[float] = None) -> Path:
    """Quantize and write one PNG per frame plus meta.json.

    Files are frame_0000.png upward; meta.json records grid, params,
    seed, and the quantization constants needed to interpret the grays.
    Returns the meta.json path.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    u8, used_sigma = quantize_frames(stack.frames, sigma=sigma)
    for t in range(u8.shape[0]):
        Image.fromarray(u8[t], mode="L").save(out / f"frame_{t:04d}.png")
    meta = _sidecar_meta(stack)
    meta["quantization"] = {"offset": QUANT_OFFSET, "gain": QUANT_GAIN,
                            "sigma_i": used_sigma}
    meta_path = out / "meta.json"
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta_path


def read_png_dir(out_dir) -> Tuple[np.ndarray, dict]:
    """Load a PNG frame directory back as (uint8 stack, meta dict)."""
    out = Path(out_dir)
    try:
        meta = json.loads((out / "meta.json").read_text())
        n_frames = meta["n_frames"]
    except (KeyError, ValueError, OSError) as exc:
        raise SessionFormatError(f"bad frame directory {out}: {exc}") \
            from exc
    frames = []
    for t in range(n_frames):
        frame_path = out / f"frame_{t:04d}.png"
        if not frame_path.exists():
            raise SessionFormatError(f"missing frame file {frame_path}")
        frames.append(np.asarray(Image.open(frame_path), dtype=np.uint8))
    return np.stack(frames), meta
