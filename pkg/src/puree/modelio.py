"""Versioned binary model container with a JSON provenance sidecar.

Layout (little-endian)::

    8s   magic  b"PUREEMDL"
    u32  format version
    u32  payload tag (see TAGS)
    u32  number of dims, then that many u32 dims
    u32  number of named arrays, then per array:
         u16 name length, name (utf-8), u8 dtype code, u8 ndim,
         ndim x u32 shape, raw data

Network layer matrices are always written as float32.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .classifiers import DecisionTree, ForestModel, Standardizer, SvmModel
from .neural import Autoencoder, DenseLayer, StackedNet

MAGIC = b"PUREEMDL"
VERSION = 1
TAGS = {"stacked_net": 1, "autoencoder": 2, "forest": 3, "svm": 4}
_DTYPES = {1: "<f4", 2: "<f8", 3: "<i4", 4: "<i8"}
_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


class ModelFormatError(ValueError):
    pass


def write_container(path, tag: str, dims, arrays: dict, meta: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = bytearray(MAGIC)
    out += struct.pack("<III", VERSION, TAGS[tag], len(dims))
    out += struct.pack(f"<{len(dims)}I", *dims)
    out += struct.pack("<I", len(arrays))
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        code = _CODES.get(arr.dtype.newbyteorder("<"))
        if code is None:
            raise ModelFormatError(f"unsupported dtype {arr.dtype} for {name!r}")
        raw = name.encode("utf-8")
        out += struct.pack("<H", len(raw)) + raw
        out += struct.pack("<BB", code, arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
    path.write_bytes(bytes(out))
    sidecar = {"format": "puree-model", "version": VERSION, "tag": tag, "dims": list(dims)}
    sidecar.update(meta or {})
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def read_container(path) -> tuple[str, list[int], dict]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ModelFormatError(f"{path}: bad magic bytes")
    version, tag_code, n_dims = struct.unpack_from("<III", data, 8)
    if version != VERSION:
        raise ModelFormatError(f"{path}: unsupported container version {version}")
    tags = {v: k for k, v in TAGS.items()}
    if tag_code not in tags:
        raise ModelFormatError(f"{path}: unknown payload tag {tag_code}")
    off = 20
    dims = list(struct.unpack_from(f"<{n_dims}I", data, off))
    off += 4 * n_dims
    (n_arrays,) = struct.unpack_from("<I", data, off)
    off += 4
    arrays = {}
    for _ in range(n_arrays):
        (n_name,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + n_name].decode("utf-8")
        off += n_name
        code, ndim = struct.unpack_from("<BB", data, off)
        off += 2
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        dt = np.dtype(_DTYPES[code])
        count = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(data, dtype=dt, count=count, offset=off).reshape(shape).copy()
        off += count * dt.itemsize
    if off != len(data):
        raise ModelFormatError(f"{path}: {len(data) - off} trailing bytes")
    return tags[tag_code], dims, arrays


def read_sidecar(path) -> dict:
    return json.loads(Path(str(path) + ".json").read_text())


def _layer_arrays(prefix, layer):
    return {f"{prefix}.W": layer.W.astype("<f4"), f"{prefix}.b": layer.b.astype("<f4")}


def save_stack(path, net: StackedNet, meta: dict | None = None) -> None:
    arrays = {}
    for k, layer in enumerate(net.layers):
        arrays.update(_layer_arrays(f"layer{k}", layer))
    write_container(path, "stacked_net", net.dims, arrays, meta)


def load_stack(path) -> StackedNet:
    tag, dims, arrays = read_container(path)
    if tag != "stacked_net":
        raise ModelFormatError(f"{path}: holds a {tag}, not a stacked net")
    n = len(dims) - 1
    layers = [DenseLayer(arrays[f"layer{k}.W"].astype(float), arrays[f"layer{k}.b"].astype(float),
                         "softmax" if k == n - 1 else "sigmoid") for k in range(n)]
    return StackedNet(layers)


def save_autoencoder(path, ae: Autoencoder, meta: dict | None = None) -> None:
    arrays = {**_layer_arrays("encoder", ae.encoder), **_layer_arrays("decoder", ae.decoder)}
    write_container(path, "autoencoder", [ae.encoder.n_in, ae.encoder.n_out], arrays, meta)


def load_autoencoder(path) -> Autoencoder:
    tag, _, a = read_container(path)
    if tag != "autoencoder":
        raise ModelFormatError(f"{path}: holds a {tag}, not an autoencoder")
    layer = lambda p: DenseLayer(a[f"{p}.W"].astype(float), a[f"{p}.b"].astype(float))
    return Autoencoder(layer("encoder"), layer("decoder"))


def save_classifier(path, model, meta: dict | None = None) -> None:
    if isinstance(model, ForestModel):
        arrays = {"seeds": np.array(model.seeds, dtype="<i8")}
        for k, t in enumerate(model.trees):
            arrays[f"tree{k}.feature"] = t.feature.astype("<i4")
            arrays[f"tree{k}.threshold"] = t.threshold.astype("<f8")
            arrays[f"tree{k}.left"] = t.left.astype("<i4")
            arrays[f"tree{k}.right"] = t.right.astype("<i4")
            arrays[f"tree{k}.value"] = t.value.astype("<i4")
        dims = [model.n_features, model.n_classes, len(model.trees)]
        write_container(path, "forest", dims, arrays, meta)
        return
    if isinstance(model, SvmModel):
        arrays = {}
        if model.scaler is not None:
            arrays["scaler.mean"] = model.scaler.mean.astype("<f8")
            arrays["scaler.scale"] = model.scaler.scale.astype("<f8")
        if model.kernel == "linear":
            arrays["weights"] = model.weights.astype("<f8")
        else:
            arrays["support"] = model.support.astype("<f8")
            arrays["alpha"] = model.alpha.astype("<f8")
        info = {"kernel": model.kernel, "lam": model.lam, "gamma": model.gamma,
                "iterations": model.iterations, "svm_meta": model.meta}
        dims = [model.n_features, model.classes]
        write_container(path, "svm", dims, arrays, {**info, **(meta or {})})
        return
    raise TypeError(f"unsupported classifier {type(model).__name__}")


def load_classifier(path):
    tag, dims, a = read_container(path)
    if tag == "forest":
        n_features, n_classes, n_trees = dims
        trees = [DecisionTree(a[f"tree{k}.feature"].astype(int), a[f"tree{k}.threshold"],
                              a[f"tree{k}.left"].astype(int), a[f"tree{k}.right"].astype(int),
                              a[f"tree{k}.value"].astype(int), n_features) for k in range(n_trees)]
        return ForestModel(trees, n_classes, [int(s) for s in a["seeds"]])
    if tag == "svm":
        info = read_sidecar(path)
        scaler = Standardizer(a["scaler.mean"], a["scaler.scale"]) if "scaler.mean" in a else None
        return SvmModel(info["kernel"], info["lam"], dims[1], scaler, weights=a.get("weights"),
                        support=a.get("support"), alpha=a.get("alpha"), gamma=info["gamma"],
                        iterations=info["iterations"], meta=info.get("svm_meta", {}))
    raise ModelFormatError(f"{path}: holds a {tag}, not a classifier")
