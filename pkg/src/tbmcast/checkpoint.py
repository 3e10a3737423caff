"""Flat textual checkpoint container for every fitted model kind.

Layout (UTF-8, line oriented)::

    tbmcast-checkpoint v1
    kind <model-kind>
    meta <key> <value ...>            # zero or more
    tensor <name> <dtype> <d0,d1,..>  # then the row-major values,
    <val> <val> ...                   # whitespace separated, wrapped freely

float64 values are written as ``float.hex()`` and int64 values as decimal
text, so a save/load round trip is bit-exact.  ``save_model``/``load_model``
wrap the container for the network classes, the SVR and the random forest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParseError, ValidationError
from . import neural
from .shallow import SVR, SVRConfig, ForestConfig, RandomForest, _Node

MAGIC = "tbmcast-checkpoint v1"
_PER_LINE = 8


@dataclass
class Checkpoint:
    kind: str
    tensors: dict[str, np.ndarray]
    meta: dict[str, str]


def _encode(value, dtype) -> str:
    if dtype == np.float64:
        return float(value).hex()
    return str(int(value))


def save_checkpoint(path, kind: str, tensors: dict[str, np.ndarray],
                    meta: dict[str, str] | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(MAGIC + "\n")
        fh.write(f"kind {kind}\n")
        for key, value in (meta or {}).items():
            if "\n" in key or "\n" in str(value) or " " in key:
                raise ValidationError(f"meta key/value not line-safe: {key!r}")
            fh.write(f"meta {key} {value}\n")
        for name, arr in tensors.items():
            arr = np.asarray(arr)
            if arr.dtype not in (np.float64, np.int64):
                raise ValidationError(
                    f"tensor {name!r}: only float64/int64 supported, got {arr.dtype}"
                )
            if arr.ndim == 0:
                raise ValidationError(
                    f"tensor {name!r}: scalars are ambiguous here, store shape (1,)"
                )
            shape = ",".join(str(d) for d in arr.shape)
            fh.write(f"tensor {name} {arr.dtype.name} {shape}\n")
            flat = arr.ravel()
            for start in range(0, flat.size, _PER_LINE):
                chunk = flat[start : start + _PER_LINE]
                fh.write(" ".join(_encode(v, arr.dtype) for v in chunk) + "\n")


def load_checkpoint(path) -> Checkpoint:
    with open(path, encoding="utf-8") as fh:
        tokens_by_line = [line.rstrip("\n") for line in fh]
    if not tokens_by_line or tokens_by_line[0] != MAGIC:
        raise ParseError(f"{path}: not a checkpoint file")
    kind = ""
    meta: dict[str, str] = {}
    tensors: dict[str, np.ndarray] = {}
    i = 1
    n_lines = len(tokens_by_line)
    while i < n_lines:
        line = tokens_by_line[i]
        i += 1
        if not line.strip():
            continue
        head, _, rest = line.partition(" ")
        if head == "kind":
            kind = rest.strip()
        elif head == "meta":
            key, _, value = rest.partition(" ")
            meta[key] = value
        elif head == "tensor":
            try:
                name, dtype_name, shape_text = rest.split(" ")
            except ValueError:
                raise ParseError(f"{path}: malformed tensor header {line!r}") from None
            if dtype_name not in ("float64", "int64"):
                raise ParseError(f"{path}: unsupported dtype {dtype_name!r}")
            shape = tuple(int(d) for d in shape_text.split(",") if d != "")
            size = int(np.prod(shape)) if shape else 0
            values = []
            while len(values) < size:
                if i >= n_lines:
                    raise ParseError(f"{path}: tensor {name!r} is truncated")
                values.extend(tokens_by_line[i].split())
                i += 1
            if len(values) != size:
                raise ParseError(f"{path}: tensor {name!r} has extra values")
            if dtype_name == "float64":
                arr = np.array([float.fromhex(v) for v in values], dtype=np.float64)
            else:
                arr = np.array([int(v) for v in values], dtype=np.int64)
            tensors[name] = arr.reshape(shape)
        else:
            raise ParseError(f"{path}: unknown record {head!r}")
    if not kind:
        raise ParseError(f"{path}: missing kind record")
    return Checkpoint(kind=kind, tensors=tensors, meta=meta)


# ---------------------------------------------------------------------------
# model-level wrappers


def _flatten_tree(node: _Node):
    """Preorder arrays: children as indices, -1 marking leaves."""
    feats, thresholds, lefts, rights, values = [], [], [], [], []

    def walk(n):
        idx = len(feats)
        feats.append(n.feature)
        thresholds.append(n.threshold)
        values.append(n.value)
        lefts.append(-1)
        rights.append(-1)
        if not n.is_leaf:
            lefts[idx] = walk(n.left)
            rights[idx] = walk(n.right)
        return idx

    walk(node)
    return (
        np.array(feats, dtype=np.int64),
        np.array(thresholds, dtype=np.float64),
        np.array(lefts, dtype=np.int64),
        np.array(rights, dtype=np.int64),
        np.array(values, dtype=np.float64),
    )


def _rebuild_tree(feats, thresholds, lefts, rights, values, idx=0) -> _Node:
    node = _Node(value=values[idx].copy())
    if lefts[idx] >= 0:
        node.feature = int(feats[idx])
        node.threshold = float(thresholds[idx])
        node.left = _rebuild_tree(feats, thresholds, lefts, rights, values, lefts[idx])
        node.right = _rebuild_tree(feats, thresholds, lefts, rights, values, rights[idx])
    return node


def save_model(path, model) -> None:
    if isinstance(model, neural._Network):
        c = model.config
        meta = {
            "n_inputs": c.n_inputs, "window": c.window, "n_outputs": c.n_outputs,
            "hidden": c.hidden, "use_bias": int(c.use_bias),
            "sigmoid_head": int(c.sigmoid_head),
        }
        save_checkpoint(path, model.kind, dict(model.params),
                        {k: str(v) for k, v in meta.items()})
    elif isinstance(model, SVR):
        meta = {
            "C": repr(model.config.C), "epsilon": repr(model.config.epsilon),
            "gamma": repr(model.gamma_), "b": float(model.b).hex(),
            "converged": int(model.converged),
        }
        tensors = {"sv_X": model._sv_X, "sv_theta": model._sv_theta}
        save_checkpoint(path, "svr", tensors, meta)
    elif isinstance(model, RandomForest):
        c = model.config
        meta = {
            "n_trees": c.n_trees, "max_depth": c.max_depth,
            "min_split": c.min_split, "seed": c.seed,
            "n_outputs": model._n_outputs, "single": int(model._single),
        }
        tensors = {}
        for t, tree in enumerate(model.trees):
            feats, thresholds, lefts, rights, values = _flatten_tree(tree)
            tensors[f"tree{t}/feature"] = feats
            tensors[f"tree{t}/threshold"] = thresholds
            tensors[f"tree{t}/left"] = lefts
            tensors[f"tree{t}/right"] = rights
            tensors[f"tree{t}/value"] = values
        save_checkpoint(path, "rf", tensors, {k: str(v) for k, v in meta.items()})
    else:
        raise ValidationError(f"cannot checkpoint {type(model).__name__}")


def load_model(path):
    ck = load_checkpoint(path)
    if ck.kind in neural.MODEL_KINDS:
        config = neural.ModelConfig(
            n_inputs=int(ck.meta["n_inputs"]),
            window=int(ck.meta["window"]),
            n_outputs=int(ck.meta["n_outputs"]),
            hidden=int(ck.meta["hidden"]),
            use_bias=bool(int(ck.meta["use_bias"])),
            sigmoid_head=bool(int(ck.meta["sigmoid_head"])),
        )
        model = neural.build_model(ck.kind, config)
        if set(ck.tensors) != set(model.params):
            raise ParseError(f"{path}: tensor names do not match a {ck.kind} model")
        for name, arr in ck.tensors.items():
            if arr.shape != model.params[name].shape:
                raise ParseError(f"{path}: tensor {name!r} has wrong shape")
            model.params[name] = arr.astype(np.float64)
        return model
    if ck.kind == "svr":
        model = SVR(SVRConfig(
            C=float(ck.meta["C"]), epsilon=float(ck.meta["epsilon"]),
        ))
        model.gamma_ = float(ck.meta["gamma"])
        model.b = float.fromhex(ck.meta["b"])
        model.converged = bool(int(ck.meta["converged"]))
        model._sv_X = ck.tensors["sv_X"]
        model._sv_theta = ck.tensors["sv_theta"]
        model._n_features = model._sv_X.shape[1]
        return model
    if ck.kind == "rf":
        model = RandomForest(ForestConfig(
            n_trees=int(ck.meta["n_trees"]), max_depth=int(ck.meta["max_depth"]),
            min_split=int(ck.meta["min_split"]), seed=int(ck.meta["seed"]),
        ))
        model._n_outputs = int(ck.meta["n_outputs"])
        model._single = bool(int(ck.meta["single"]))
        model.trees = []
        model.oob_indices = []
        for t in range(model.config.n_trees):
            model.trees.append(_rebuild_tree(
                ck.tensors[f"tree{t}/feature"],
                ck.tensors[f"tree{t}/threshold"],
                ck.tensors[f"tree{t}/left"],
                ck.tensors[f"tree{t}/right"],
                ck.tensors[f"tree{t}/value"],
            ))
        return model
    raise ParseError(f"{path}: unknown model kind {ck.kind!r}")
