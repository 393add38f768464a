"""Checkpoint: one lbm-binary matrix per parameter plus a JSON manifest."""

import json
from pathlib import Path

import numpy as np

from ..dataio import load_matrix, save_matrix
from ..errors import MalformedFile
from .network import AeArchitecture, AeModel

MANIFEST = "manifest.json"


def save_checkpoint(model, directory, config=None):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {}
    for group, arrays in (("params", model.params), ("running", model.running)):
        for key, arr in arrays.items():
            fname = f"{group}.{key}.lbm"
            save_matrix(d / fname, np.atleast_2d(arr))
            files[f"{group}/{key}"] = {"file": fname, "shape": list(arr.shape)}
    manifest = {
        "input_dim": model.arch.input_dim,
        "hidden": list(model.arch.hidden),
        "latent_dim": model.arch.latent_dim,
        "layers": [list(layer) for layer in model.arch.layers()],
        "seed": model.seed,
        "config": config,
        "arrays": files,
    }
    (d / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return d / MANIFEST


def load_checkpoint(directory):
    d = Path(directory)
    try:
        manifest = json.loads((d / MANIFEST).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedFile(f"{d / MANIFEST}: {exc}") from exc
    arch = AeArchitecture(manifest["input_dim"], tuple(manifest["hidden"]), manifest["latent_dim"])
    params, running = {}, {}
    for name, entry in manifest["arrays"].items():
        group, key = name.split("/", 1)
        arr = load_matrix(d / entry["file"]).reshape(entry["shape"])
        (params if group == "params" else running)[key] = arr
    model = AeModel(arch, params, running, manifest["seed"])
    expected = {f"{n}.W" for n, *_ in arch.layers()}
    if not expected <= set(params):
        raise MalformedFile(f"{d}: checkpoint is missing weight matrices")
    return model
