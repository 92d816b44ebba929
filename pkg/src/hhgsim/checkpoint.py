"""Versioned binary checkpoints for operators and propagation state.

Everything is stored as numpy .npz archives with an explicit schema version
and shape metadata, so files are self-describing and restarts reproduce the
remaining trajectory bit for bit (the propagation itself is deterministic
and RNG-free).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

OPERATOR_SCHEMA = 1
STATE_SCHEMA = 1


class CheckpointError(RuntimeError):
    pass


def save_operator(path, bands: np.ndarray, p: int, kind: str = "banded",
                  extra: dict | None = None) -> None:
    """Write banded operator data with a versioned header."""
    payload = {
        "schema": np.int64(OPERATOR_SCHEMA),
        "kind": np.str_(kind),
        "p": np.int64(p),
        "shape": np.asarray(bands.shape, dtype=np.int64),
        "bands": bands,
    }
    for key, val in (extra or {}).items():
        payload["x_" + key] = val
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_operator(path):
    """Read an operator checkpoint; returns (bands, p, kind, extras)."""
    with np.load(path, allow_pickle=False) as data:
        schema = int(data["schema"])
        if schema != OPERATOR_SCHEMA:
            raise CheckpointError(f"unsupported operator schema {schema}")
        bands = data["bands"]
        if tuple(data["shape"]) != bands.shape:
            raise CheckpointError("operator checkpoint shape header mismatch")
        extras = {key[2:]: data[key] for key in data.files if key.startswith("x_")}
        return bands, int(data["p"]), str(data["kind"]), extras


def save_propagation_checkpoint(path, state, step: int, rows, extra_rows,
                                config_hash: str = "") -> None:
    payload = {
        "schema": np.int64(STATE_SCHEMA),
        "config_hash": np.str_(config_hash),
        "t": np.float64(state.t),
        "step": np.int64(step),
        "gauge": np.str_(state.gauge),
        "absorbed": np.float64(state.cumulative_absorbed),
        "coeffs": state.coeffs,
        "n_rows": np.int64(len(rows)),
        "n_extra": np.int64(len(extra_rows)),
    }
    for i, col in enumerate(rows):
        payload[f"row{i}"] = np.asarray(col, dtype=float)
    for i, col in enumerate(extra_rows):
        payload[f"extra{i}"] = np.asarray(col, dtype=float)
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **payload)
    tmp.replace(path)


def load_propagation_checkpoint(path) -> dict:
    """Load a resume dict for propagate(..., resume=...)."""
    with np.load(path, allow_pickle=False) as data:
        schema = int(data["schema"])
        if schema != STATE_SCHEMA:
            raise CheckpointError(f"unsupported state schema {schema}")
        rows = [data[f"row{i}"] for i in range(int(data["n_rows"]))]
        extra_rows = [data[f"extra{i}"] for i in range(int(data["n_extra"]))]
        return {
            "config_hash": str(data["config_hash"]),
            "t": float(data["t"]),
            "step": int(data["step"]),
            "gauge": str(data["gauge"]),
            "absorbed": float(data["absorbed"]),
            "coeffs": data["coeffs"],
            "rows": rows,
            "extra_rows": extra_rows,
        }
