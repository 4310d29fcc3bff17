"""Deterministic checkpoint container for model parameters and norm stats.

Layout: a magic line, one JSON header line describing every tensor, then
the raw little-endian float64 tensor bytes concatenated in header order.
No timestamps are stored, so identical training runs produce byte-identical
checkpoints. Loading validates every shape against the architecture.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, IncompatibleArtifactError
from .features import DEPENDENT_WIDTH, INVARIANT_WIDTH, NormStats
from .model import (
    BASELINE_HIDDEN,
    BASELINE_INPUT,
    BaselineParams,
    ConvLayer,
    ModelParams,
    expected_shapes,
)

MAGIC = b"SCHEDPERF-CKPT 1\n"
CHECKPOINT_FORMAT_VERSION = "1"

_NORM_TENSORS = ("norm.inv_mean", "norm.inv_std", "norm.dep_mean", "norm.dep_std")


def _baseline_shapes() -> dict[str, tuple[int, ...]]:
    h1, h2 = BASELINE_HIDDEN
    return {
        "w1": (BASELINE_INPUT, h1), "b1": (h1,),
        "w2": (h1, h2), "b2": (h2,),
        "w3": (h2, 1), "b3": (1,),
        "pooled_mean": (BASELINE_INPUT,), "pooled_std": (BASELINE_INPUT,),
    }


@dataclass
class Checkpoint:
    kind: str                          # "gcn" | "baseline"
    params: ModelParams | BaselineParams
    norm_stats: NormStats | None
    config_hash: str
    format_version: str = CHECKPOINT_FORMAT_VERSION


def save_checkpoint(
    path: str,
    params: ModelParams | BaselineParams,
    norm_stats: NormStats | None,
    config_hash: str,
) -> None:
    kind = "gcn" if isinstance(params, ModelParams) else "baseline"
    tensors: list[tuple[str, np.ndarray]] = [
        (name, arr) for name, arr, _ in params.named_tensors()
    ]
    if kind == "gcn":
        if norm_stats is None:
            raise DataFormatError("gcn checkpoints must embed normalization statistics")
        tensors += list(
            zip(
                _NORM_TENSORS,
                (norm_stats.inv_mean, norm_stats.inv_std,
                 norm_stats.dep_mean, norm_stats.dep_std),
            )
        )
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": kind,
        "conv_layers": params.num_conv_layers if kind == "gcn" else 0,
        "config_hash": config_hash,
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
    }
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n")
            for _, arr in tensors:
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    except OSError as exc:
        raise DataFormatError(f"cannot write {path}: {exc}") from exc


def load_checkpoint(path: str) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    if not blob.startswith(MAGIC):
        raise DataFormatError(f"{path}: not a checkpoint file (bad magic)")
    body = blob[len(MAGIC):]
    nl = body.find(b"\n")
    if nl < 0:
        raise DataFormatError(f"{path}: truncated checkpoint header")
    try:
        header = json.loads(body[:nl].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: bad checkpoint header: {exc}") from exc
    if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise IncompatibleArtifactError(
            f"{path}: checkpoint format {header.get('format_version')!r} unsupported "
            f"(reader supports {CHECKPOINT_FORMAT_VERSION!r})"
        )
    kind = header.get("kind")
    if kind not in ("gcn", "baseline"):
        raise DataFormatError(f"{path}: unknown checkpoint kind {kind!r}")

    raw = body[nl + 1:]
    arrays: dict[str, np.ndarray] = {}
    at = 0
    for spec in header["tensors"]:
        shape = tuple(int(s) for s in spec["shape"])
        n = int(np.prod(shape)) if shape else 1
        nbytes = n * 8
        if at + nbytes > len(raw):
            raise DataFormatError(f"{path}: truncated tensor data at {spec['name']}")
        arrays[spec["name"]] = (
            np.frombuffer(raw[at : at + nbytes], dtype="<f8").reshape(shape).copy()
        )
        at += nbytes
    if at != len(raw):
        raise DataFormatError(f"{path}: {len(raw) - at} trailing bytes after tensors")

    if kind == "gcn":
        expected = expected_shapes(int(header["conv_layers"]))
        expected.update({n: (INVARIANT_WIDTH,) for n in _NORM_TENSORS[:2]})
        expected.update({n: (DEPENDENT_WIDTH,) for n in _NORM_TENSORS[2:]})
    else:
        expected = _baseline_shapes()
    for name, shape in expected.items():
        if name not in arrays:
            raise IncompatibleArtifactError(f"{path}: missing tensor {name}")
        if tuple(arrays[name].shape) != shape:
            raise IncompatibleArtifactError(
                f"{path}: tensor {name} has shape {tuple(arrays[name].shape)}, expected {shape}"
            )
    extras = set(arrays) - set(expected)
    if extras:
        raise IncompatibleArtifactError(f"{path}: unexpected tensors {sorted(extras)}")

    if kind == "gcn":
        convs = [
            ConvLayer(
                w=arrays[f"conv{k}.w"], b=arrays[f"conv{k}.b"],
                bn_gamma=arrays[f"conv{k}.bn_gamma"], bn_beta=arrays[f"conv{k}.bn_beta"],
                bn_running_mean=arrays[f"conv{k}.bn_running_mean"],
                bn_running_var=arrays[f"conv{k}.bn_running_var"],
            )
            for k in range(int(header["conv_layers"]))
        ]
        params: ModelParams | BaselineParams = ModelParams(
            w_inv=arrays["w_inv"], b_inv=arrays["b_inv"],
            w_dep=arrays["w_dep"], b_dep=arrays["b_dep"],
            convs=convs, w_out=arrays["w_out"], b_out=arrays["b_out"],
        )
        norm = NormStats(
            inv_mean=arrays["norm.inv_mean"], inv_std=arrays["norm.inv_std"],
            dep_mean=arrays["norm.dep_mean"], dep_std=arrays["norm.dep_std"],
        )
    else:
        params = BaselineParams(
            w1=arrays["w1"], b1=arrays["b1"], w2=arrays["w2"], b2=arrays["b2"],
            w3=arrays["w3"], b3=arrays["b3"],
            pooled_mean=arrays["pooled_mean"], pooled_std=arrays["pooled_std"],
        )
        norm = None
    return Checkpoint(
        kind=kind, params=params, norm_stats=norm,
        config_hash=header.get("config_hash", ""),
        format_version=header["format_version"],
    )
