"""Canonical on-disk formats: episode logs, demonstrations, models.

Episode logs are newline-delimited JSON with sorted keys and no volatile
fields, so identical runs produce byte-identical files. Demonstrations
are plain CSV. Models round-trip through a versioned JSON document.
"""

from __future__ import annotations

import json

import numpy as np

from .gp import Demonstration, GpModel, Hyperparams
from .sim.episode import EpisodeLog

FORMAT_VERSION = 1


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_episode(log: EpisodeLog, path) -> None:
    with open(path, "w") as fh:
        fh.write(_dumps({"metadata": log.metadata, "version": FORMAT_VERSION}))
        fh.write("\n")
        for rec in log.records:
            fh.write(_dumps(rec))
            fh.write("\n")


def read_episode(path) -> EpisodeLog:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    if not lines:
        raise ValueError(f"empty episode log {path!r}")
    head = json.loads(lines[0])
    if head.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported episode log version {head.get('version')!r}")
    return EpisodeLog(metadata=head["metadata"], records=[json.loads(ln) for ln in lines[1:]])


def write_demo_csv(demo: Demonstration, path) -> None:
    cols = (
        ["t"]
        + [f"p{a}" for a in "xyz"]
        + [f"r{a}" for a in "xyz"]
        + [f"f{a}" for a in "xyz"]
        + [f"m{a}" for a in "xyz"]
    )
    data = np.column_stack([demo.t, demo.poses, demo.wrenches])
    np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="")


def read_demo_csv(path) -> Demonstration:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 13:
        raise ValueError(f"expected 13 columns in {path!r}, got {data.shape[1]}")
    return Demonstration(data[:, 0], data[:, 1:7], data[:, 7:13])


def save_model(model: GpModel, path) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "mode_id": int(model.mode_id),
        "lin": list(model.lin.as_array()),
        "rot": list(model.rot.as_array()),
        "X": model.X.tolist(),
        "Y": model.Y.tolist(),
        "Z": None if model.Z is None else model.Z.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_model(path) -> GpModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model version {doc.get('format_version')!r}")
    return GpModel(
        mode_id=int(doc["mode_id"]),
        X=np.asarray(doc["X"], dtype=float),
        Y=np.asarray(doc["Y"], dtype=float),
        lin=Hyperparams(*doc["lin"]),
        rot=Hyperparams(*doc["rot"]),
        Z=None if doc.get("Z") is None else np.asarray(doc["Z"], dtype=float),
    )
