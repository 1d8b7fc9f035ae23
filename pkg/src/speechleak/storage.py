"""File formats: PCM16 WAV I/O, feature-grid binaries, gradient archives."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import scipy.io.wavfile

from .dsp import GRID_SIZE, NUM_SAMPLES, SAMPLE_RATE, CmvnStats, FeatureGrid, FeatureKind
from .gradients import GradientSet, validate_gradient_set
from .model import PARAM_COUNT, PARAM_SHAPES, ModelParams

GRID_MAGIC = b"SLFG"
GRID_VERSION = 1
PARAMS_MAGIC = b"SLMP"
PARAMS_VERSION = 1
_KIND_CODES = {FeatureKind.MEL_DB: 0, FeatureKind.MFCC_CMVN: 1}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


def load_wav(path: str | Path) -> np.ndarray:
    """Read a PCM16 mono 16 kHz WAV into [-1, 1], padded/cut to 16000 samples."""
    path = Path(path)
    try:
        rate, data = scipy.io.wavfile.read(path)
    except Exception as exc:
        raise ValueError(f"{path}: unreadable WAV ({exc})") from exc
    if rate != SAMPLE_RATE:
        raise ValueError(f"{path}: expected {SAMPLE_RATE} Hz, got {rate}")
    if data.dtype != np.int16:
        raise ValueError(f"{path}: expected 16-bit PCM, got dtype {data.dtype}")
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono, got {data.ndim} channels")
    wave = data.astype(np.float64) / 32768.0
    if wave.size < NUM_SAMPLES:
        wave = np.pad(wave, (0, NUM_SAMPLES - wave.size))
    return wave[:NUM_SAMPLES]


def save_wav(path: str | Path, wave: np.ndarray) -> None:
    """Write a float waveform as PCM16 mono 16 kHz, exactly 16000 samples."""
    wave = np.asarray(wave, dtype=np.float64)
    if wave.ndim != 1:
        raise ValueError("waveform must be 1-D")
    if wave.size < NUM_SAMPLES:
        wave = np.pad(wave, (0, NUM_SAMPLES - wave.size))
    wave = wave[:NUM_SAMPLES]
    pcm = np.clip(np.rint(wave * 32768.0), -32768, 32767).astype(np.int16)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scipy.io.wavfile.write(path, SAMPLE_RATE, pcm)


def save_grid(path: str | Path, grid: FeatureGrid) -> None:
    """Binary grid: magic, version, kind code, 32x32 little-endian float64."""
    header = GRID_MAGIC + struct.pack("<HBB", GRID_VERSION, _KIND_CODES[grid.kind], 0)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(grid.values.astype("<f8").tobytes())


def load_grid(path: str | Path) -> FeatureGrid:
    """Read a grid written by save_grid."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) != 8 + GRID_SIZE * GRID_SIZE * 8 or raw[:4] != GRID_MAGIC:
        raise ValueError(f"{path}: not a feature-grid file")
    version, kind_code, _ = struct.unpack("<HBB", raw[4:8])
    if version != GRID_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if kind_code not in _CODE_KINDS:
        raise ValueError(f"{path}: unknown feature kind code {kind_code}")
    values = np.frombuffer(raw[8:], dtype="<f8").reshape(GRID_SIZE, GRID_SIZE)
    return FeatureGrid(values.copy(), _CODE_KINDS[kind_code])


def save_grid_text(path: str | Path, grid: FeatureGrid) -> None:
    """Plain-text dump of a grid for eyeballing; one row per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# kind={grid.kind.value} rows={GRID_SIZE} cols={GRID_SIZE}\n")
        for row in grid.values:
            fh.write(" ".join(f"{v:.10g}" for v in row) + "\n")


def save_params(path: str | Path, params: ModelParams) -> None:
    """Binary model blob: magic, version, scalar count, tensors flat in field order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(PARAMS_MAGIC + struct.pack("<HI", PARAMS_VERSION, PARAM_COUNT))
        for name in PARAM_SHAPES:
            fh.write(getattr(params, name).astype("<f8").tobytes())


def load_params(path: str | Path) -> ModelParams:
    """Read a model blob written by save_params."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 10 or raw[:4] != PARAMS_MAGIC:
        raise ValueError(f"{path}: not a model-parameter file")
    version, count = struct.unpack("<HI", raw[4:10])
    if version != PARAMS_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if count != PARAM_COUNT or len(raw) != 10 + PARAM_COUNT * 8:
        raise ValueError(f"{path}: wrong parameter count")
    flat = np.frombuffer(raw[10:], dtype="<f8")
    fields, offset = {}, 0
    for name, shape in PARAM_SHAPES.items():
        size = int(np.prod(shape))
        fields[name] = flat[offset : offset + size].reshape(shape).copy()
        offset += size
    return ModelParams(**fields)


def save_gradients(path: str | Path, grads: GradientSet) -> None:
    """Archive one gradient set; the serialized client upload."""
    grads = validate_gradient_set(grads)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:  # exact path; no implicit .npz suffix
        np.savez(fh, **grads)


def load_gradients(path: str | Path) -> GradientSet:
    """Read a gradient set written by save_gradients."""
    with np.load(Path(path)) as archive:
        return validate_gradient_set({name: archive[name] for name in archive.files})


def save_cmvn_stats(path: str | Path, stats: CmvnStats) -> None:
    """CMVN statistics as JSON (mean and std arrays)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"mean": stats.mean.tolist(), "std": stats.std.tolist()}
    path.write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def load_cmvn_stats(path: str | Path) -> CmvnStats:
    """Read CMVN statistics written by save_cmvn_stats."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return CmvnStats(np.array(payload["mean"]), np.array(payload["std"]))
