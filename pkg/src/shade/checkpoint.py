"""Versioned model checkpoints: architecture, parameters, regularizer state.

NPZ container with a JSON architecture record; float64 arrays round-trip
bit-exact.
"""

from __future__ import annotations

import json

import numpy as np

from .network import Network, network_from_arch
from .shade_reg import ShadeState

FORMAT_VERSION = 1


def save_checkpoint(path, net: Network, shade_state: ShadeState | None = None) -> None:
    arrays: dict[str, np.ndarray] = {
        "format_version": np.array([FORMAT_VERSION], dtype=np.int64),
        "arch_json": np.frombuffer(
            json.dumps({"layers": net.arch_spec(),
                        "frozen": [bool(l.frozen) for l in net.layers]}).encode(),
            dtype=np.uint8),
    }
    for i, name, value in net.parameters():
        arrays[f"param_{i}_{name}"] = value
    if shade_state is not None:
        arrays["has_shade_state"] = np.array([1], dtype=np.int64)
        arrays.update(shade_state.state_arrays())
    else:
        arrays["has_shade_state"] = np.array([0], dtype=np.int64)
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_checkpoint(path) -> tuple[Network, ShadeState | None]:
    with np.load(path) as data:
        arrays = {k: data[k] for k in data.files}
    version = int(arrays["format_version"][0])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    meta = json.loads(bytes(arrays["arch_json"]).decode())
    net = network_from_arch(meta["layers"])
    for flag, layer in zip(meta["frozen"], net.layers):
        layer.frozen = bool(flag)
    for i, name, value in net.parameters():
        stored = arrays[f"param_{i}_{name}"]
        if stored.shape != value.shape:
            raise ValueError(f"checkpoint parameter param_{i}_{name} has shape "
                             f"{stored.shape}, expected {value.shape}")
        value[...] = stored
    state = None
    if int(arrays["has_shade_state"][0]):
        state = ShadeState.from_state_arrays(arrays)
    return net, state
