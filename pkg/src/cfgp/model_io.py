"""JSON persistence for fitted mixture models.

One JSON document per model: {version, n_components, log_weights,
components: [{mean, kernel, response, response_mode}], event_action_model?}
with every parameter in natural (constrained) space.  Specs are encoded as
tagged objects so the file stays self-describing.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import ParseError
from .gp import EventActionModel, GPComponent, MixtureModel
from .kernels import (
    Additive,
    BSplineMean,
    IOU,
    Matern32,
    QuadPoly,
    ResponseParams,
    Saturating,
    SumKernel,
    WhiteNoise,
    Zero,
)

__all__ = ["model_to_dict", "model_from_dict", "save_model", "load_model"]

FORMAT_VERSION = 1


def _mean_to_dict(mean):
    if isinstance(mean, Zero):
        return {"type": "zero"}
    return {
        "type": "bspline",
        "knots": mean.knots.tolist(),
        "coeffs": mean.coeffs.tolist(),
        "degree": mean.degree,
    }


def _kernel_to_dict(kernel):
    if isinstance(kernel, Matern32):
        return {"type": "matern32", "variance": kernel.variance,
                "lengthscale": kernel.lengthscale}
    if isinstance(kernel, IOU):
        return {"type": "iou", "alpha": kernel.alpha, "nu": kernel.nu}
    if isinstance(kernel, QuadPoly):
        return {"type": "quad_poly", "sigma": kernel.Sigma.tolist()}
    if isinstance(kernel, WhiteNoise):
        return {"type": "white_noise", "sigma": kernel.sigma}
    if isinstance(kernel, SumKernel):
        return {"type": "sum", "terms": [_kernel_to_dict(t) for t in kernel.terms]}
    raise ParseError(f"cannot serialize kernel {type(kernel).__name__}")


def _mode_to_dict(mode):
    if isinstance(mode, Saturating):
        return {"type": "saturating", "window": mode.window, "effect": mode.effect}
    return {"type": "additive"}


def _response_to_dict(response):
    return {
        a_type: {"h1": p.h1, "a": p.a, "b": p.b, "h2": p.h2, "r": p.r}
        for a_type, p in sorted(response.items())
    }


def model_to_dict(model: MixtureModel) -> dict:
    doc = {
        "version": FORMAT_VERSION,
        "n_components": model.n_components,
        "log_weights": model.log_weights.tolist(),
        "components": [
            {
                "mean": _mean_to_dict(c.mean),
                "kernel": _kernel_to_dict(c.kernel),
                "response": _response_to_dict(c.response),
                "response_mode": _mode_to_dict(c.response_mode),
            }
            for c in model.components
        ],
    }
    if model.event_action_model is not None:
        eam = model.event_action_model
        doc["event_action_model"] = {
            "lambda": eam.rate,
            "action_weight": eam.action_weight,
            "action_bias": eam.action_bias,
            "class_scales": list(eam.class_scales) if eam.class_scales else None,
        }
    return doc


def _require(doc, key, context):
    if key not in doc:
        raise ParseError(f"{context} is missing {key!r}")
    return doc[key]


def _mean_from_dict(doc):
    kind = _require(doc, "type", "mean")
    if kind == "zero":
        return Zero()
    if kind == "bspline":
        return BSplineMean(
            knots=np.asarray(doc["knots"], dtype=float),
            coeffs=np.asarray(doc["coeffs"], dtype=float),
            degree=int(doc.get("degree", 3)),
        )
    raise ParseError(f"unknown mean type {kind!r}")


def _kernel_from_dict(doc):
    kind = _require(doc, "type", "kernel")
    if kind == "matern32":
        return Matern32(float(doc["variance"]), float(doc["lengthscale"]))
    if kind == "iou":
        return IOU(float(doc["alpha"]), float(doc["nu"]))
    if kind == "quad_poly":
        return QuadPoly(np.asarray(doc["sigma"], dtype=float))
    if kind == "white_noise":
        return WhiteNoise(float(doc["sigma"]))
    if kind == "sum":
        return SumKernel(tuple(_kernel_from_dict(t) for t in doc["terms"]))
    raise ParseError(f"unknown kernel type {kind!r}")


def _mode_from_dict(doc):
    kind = _require(doc, "type", "response_mode")
    if kind == "additive":
        return Additive()
    if kind == "saturating":
        return Saturating(window=float(doc["window"]), effect=float(doc["effect"]))
    raise ParseError(f"unknown response mode {kind!r}")


def _response_from_dict(doc):
    return {
        a_type: ResponseParams(
            h1=float(p["h1"]), a=float(p["a"]), b=float(p["b"]),
            h2=float(p["h2"]), r=float(p["r"]),
        )
        for a_type, p in doc.items()
    }


def model_from_dict(doc: dict) -> MixtureModel:
    version = _require(doc, "version", "model document")
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported model format version {version!r}")
    components_doc = _require(doc, "components", "model document")
    log_weights = np.asarray(_require(doc, "log_weights", "model document"), dtype=float)
    if doc.get("n_components") != len(components_doc):
        raise ParseError(
            f"n_components {doc.get('n_components')} does not match "
            f"{len(components_doc)} components"
        )
    try:
        components = tuple(
            GPComponent(
                mean=_mean_from_dict(_require(c, "mean", "component")),
                kernel=_kernel_from_dict(_require(c, "kernel", "component")),
                response=_response_from_dict(c.get("response", {})),
                response_mode=_mode_from_dict(
                    c.get("response_mode", {"type": "additive"})
                ),
            )
            for c in components_doc
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed component: {exc}") from None

    eam = None
    if doc.get("event_action_model") is not None:
        e = doc["event_action_model"]
        scales = e.get("class_scales")
        eam = EventActionModel(
            rate=float(_require(e, "lambda", "event_action_model")),
            action_weight=float(_require(e, "action_weight", "event_action_model")),
            action_bias=float(_require(e, "action_bias", "event_action_model")),
            class_scales=tuple(scales) if scales else None,
        )
    return MixtureModel(
        log_weights=log_weights, components=components, event_action_model=eam
    )


def save_model(model: MixtureModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> MixtureModel:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("model document must be a JSON object")
    return model_from_dict(doc)
