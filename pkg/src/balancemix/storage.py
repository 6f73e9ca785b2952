"""On-disk formats: dataset files, checkpoints and per-run analytics.

Dataset file layout (all integers little-endian)::

    8 bytes   magic b"BMIXDS01"
    4 bytes   uint32 header length H
    H bytes   UTF-8 JSON header: n, n_val, d, k, seed, noise, generator
    features  float32 [n + n_val, d], row-major
    labels    true then observed, each uint8 [n + n_val, ceil(k / 8)],
              rows packed with ``np.packbits(..., bitorder="little")``

Rows ``0..n-1`` are the training split; the rest are validation rows, whose
observed labels equal their true labels.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .datagen import Dataset
from .errors import ArtifactError
from .labelmgmt import LabelLedger
from .model import PARAM_NAMES, ModelState

MAGIC = b"BMIXDS01"


def _pack(labels: np.ndarray) -> bytes:
    return np.packbits(labels.astype(np.uint8), axis=1, bitorder="little").tobytes()


def _unpack(buf: bytes, rows: int, k: int) -> np.ndarray:
    width = (k + 7) // 8
    packed = np.frombuffer(buf, dtype=np.uint8).reshape(rows, width)
    return np.unpackbits(packed, axis=1, count=k, bitorder="little")


def write_dataset(path, train: Dataset, val: Dataset | None = None, generator: dict | None = None):
    """Serialize a training split and an optional validation split."""
    if val is not None and (val.d != train.d or val.k != train.k):
        raise ArtifactError("train and val splits disagree on d or K")
    parts = [train] if val is None else [train, val]
    header = {
        "n": train.n, "n_val": 0 if val is None else val.n, "d": train.d, "k": train.k,
        "seed": int(train.seed), "noise": train.noise, "generator": generator,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    feats = np.concatenate([p.features for p in parts]).astype("<f4")
    true = np.concatenate([p.true_labels for p in parts])
    observed = np.concatenate([p.observed_labels for p in parts])
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(feats.tobytes())
        fh.write(_pack(true))
        fh.write(_pack(observed))


def read_dataset(path) -> tuple[Dataset, Dataset | None, dict]:
    """Inverse of :func:`write_dataset`; returns ``(train, val, header)``."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ArtifactError(f"cannot read dataset {path}: {exc}") from exc
    if raw[:8] != MAGIC:
        raise ArtifactError(f"{path} is not a dataset file")
    try:
        (hlen,) = struct.unpack("<I", raw[8:12])
        header = json.loads(raw[12:12 + hlen])
        n, n_val, d, k = header["n"], header["n_val"], header["d"], header["k"]
    except (struct.error, ValueError, KeyError) as exc:
        raise ArtifactError(f"corrupt dataset header in {path}") from exc
    rows = n + n_val
    width = (k + 7) // 8
    off = 12 + hlen
    sizes = [rows * d * 4, rows * width, rows * width]
    if len(raw) != off + sum(sizes):
        raise ArtifactError(f"{path} has {len(raw)} bytes, expected {off + sum(sizes)}")
    feats = np.frombuffer(raw, dtype="<f4", count=rows * d, offset=off).reshape(rows, d).astype(np.float32)
    off += sizes[0]
    true = _unpack(raw[off:off + sizes[1]], rows, k)
    observed = _unpack(raw[off + sizes[1]:], rows, k)
    train = Dataset(feats[:n], true[:n], observed[:n], seed=header["seed"], noise=header["noise"])
    val = None
    if n_val:
        val = Dataset(feats[n:], true[n:], observed[n:], seed=header["seed"])
    return train, val, header


def save_checkpoint(path, model: ModelState, config: dict, seed: int):
    arrays = dict(zip(PARAM_NAMES, model.arrays()))
    np.savez(path, **arrays, config=np.array(json.dumps(config, sort_keys=True)), seed=np.array(seed))


def load_checkpoint(path) -> tuple[ModelState, dict, int]:
    try:
        with np.load(path) as z:
            model = ModelState(*(z[name].copy() for name in PARAM_NAMES))
            return model, json.loads(str(z["config"])), int(z["seed"])
    except (OSError, KeyError, ValueError) as exc:
        raise ArtifactError(f"cannot load checkpoint {path}: {exc}") from exc


def save_analytics(path, snapshots, ledger: LabelLedger | None):
    """Per-epoch sampler and GMM state plus the final ledger, as one npz.

    Epochs without a table or GMM fit hold NaN.
    """
    e = len(snapshots)
    n = len(snapshots[0].probs)
    k = next((s.presence.shape[0] for s in snapshots if s.presence is not None), 0)
    presence = np.full((e, k), np.nan)
    absence = np.full((e, k), np.nan)
    gmm = np.full((e, k, 2, 2, 3), np.nan)
    degenerate = np.zeros((e, k, 2), dtype=bool)
    for i, s in enumerate(snapshots):
        if s.presence is not None:
            presence[i], absence[i] = s.presence, s.absence
        if s.gmm is not None:
            gmm[i], degenerate[i] = s.gmm, s.gmm_status
    out = dict(
        epoch=np.array([s.epoch for s in snapshots]),
        probs=np.stack([s.probs for s in snapshots]).reshape(e, n),
        presence=presence, absence=absence, gmm=gmm, gmm_degenerate=degenerate,
        has_gmm=np.array([s.gmm is not None for s in snapshots]),
        counts=np.array([[s.counts[t] for t in "CRU"] for s in snapshots]),
    )
    if ledger is not None:
        out.update(working=ledger.working, reliability=ledger.reliability,
                   clean_posterior=ledger.clean_posterior)
    np.savez_compressed(path, **out)


def load_analytics(path) -> dict:
    try:
        with np.load(path) as z:
            return {name: z[name] for name in z.files}
    except OSError as exc:
        raise ArtifactError(f"cannot load analytics {path}: {exc}") from exc
