"""JSON model files for fitted binary PCLDA rules.

Floats are written with Python's shortest round-trip repr, so a save/load
cycle reproduces every stored value bit for bit. ``U_hat`` is stored
column-major with its row count, as ``{"rows": p, "cols": d, "data": [...]}``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .pclda import PCLDAModel, Threshold, TopS
from .whitening import SpikedCovModel

FORMAT = "spikelda-pclda"
VERSION = 1

_REQUIRED = (
    "format", "version", "p", "d", "lambda_hat", "sigma2_hat", "U_hat", "class_means", "counts",
    "zeta_hat", "selected", "midpoint", "prior_offset", "selection_mode", "classes",
)


def _plain(label):
    return label.item() if isinstance(label, np.generic) else label


def spiked_to_dict(model: SpikedCovModel) -> dict:
    U = model.U_hat
    return {
        "p": model.p,
        "d": model.d,
        "lambda_hat": model.lambda_hat.tolist(),
        "sigma2_hat": model.sigma2_hat,
        "U_hat": {"rows": U.shape[0], "cols": U.shape[1], "data": U.ravel(order="F").tolist()},
    }


def spiked_from_dict(doc: dict) -> SpikedCovModel:
    try:
        u = doc["U_hat"]
        rows, cols = int(u["rows"]), int(u["cols"])
        data = np.asarray(u["data"], dtype=float)
        if data.size != rows * cols or rows != doc["p"] or cols != doc["d"]:
            raise SchemaError("U_hat dimensions disagree with p and d")
        U = data.reshape((rows, cols), order="F")
        return SpikedCovModel(U, np.asarray(doc["lambda_hat"], dtype=float), float(doc["sigma2_hat"]))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed spiked-model record: {exc}") from exc


def model_to_dict(model: PCLDAModel) -> dict:
    doc = {"format": FORMAT, "version": VERSION}
    doc.update(spiked_to_dict(model.whitener.model))
    doc.update(
        class_means=model.class_means.tolist(),
        counts=[int(c) for c in model.counts],
        zeta_hat=model.zeta_hat.tolist(),
        selected=[int(j) for j in model.selected],
        midpoint=model.midpoint.tolist(),
        prior_offset=model.prior_offset,
        selection_mode=model.selection.describe(),
        threshold=model.threshold,
        classes=[_plain(c) for c in model.classes],
    )
    return doc


def model_from_dict(doc: dict) -> PCLDAModel:
    missing = [k for k in _REQUIRED if k not in doc]
    if missing:
        raise SchemaError(f"model file is missing fields {missing}")
    if doc["format"] != FORMAT or doc["version"] != VERSION:
        raise SchemaError(f"unsupported model format {doc['format']!r} v{doc['version']}")
    spiked = spiked_from_dict(doc)
    mode = doc["selection_mode"]
    if mode.get("kind") == "top_s":
        selection = TopS(int(mode["s"]))
    elif mode.get("kind") == "threshold":
        selection = Threshold(float(mode["C"]), float(mode["alpha"]), bool(mode.get("fallback", False)))
    else:
        raise SchemaError(f"unknown selection mode {mode!r}")
    p = spiked.p
    zeta = np.asarray(doc["zeta_hat"], dtype=float)
    midpoint = np.asarray(doc["midpoint"], dtype=float)
    means = np.asarray(doc["class_means"], dtype=float)
    selected = np.asarray(doc["selected"], dtype=int)
    if zeta.shape != (p,) or midpoint.shape != (p,) or means.shape != (2, p):
        raise SchemaError("vector lengths disagree with p")
    if selected.size == 0 or selected.min() < 0 or selected.max() >= p:
        raise SchemaError("selected indices out of range")
    classes = tuple(doc["classes"])
    if len(classes) != 2 or len(doc["counts"]) != 2:
        raise SchemaError("a binary model needs exactly two classes")
    threshold = doc.get("threshold")
    return PCLDAModel(
        whitener=spiked.whitener(),
        zeta_hat=zeta,
        selected=selected,
        midpoint=midpoint,
        prior_offset=float(doc["prior_offset"]),
        selection=selection,
        classes=classes,
        counts=tuple(int(c) for c in doc["counts"]),
        class_means=means,
        threshold=None if threshold is None else float(threshold),
    )


def save_model(model: PCLDAModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)) + "\n", encoding="utf-8")


def load_model(path) -> PCLDAModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not a JSON document ({exc})") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    return model_from_dict(doc)
