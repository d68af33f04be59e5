"""HTTP prediction service.

A thin, stateless FastAPI layer over :func:`cfgp.gp.predict`: the app is
built once around a fitted model and a trace corpus, and every request is
answered purely from those plus the request body.  Domain and validation
failures map to 400, unknown trace ids to 404, anything unexpected to 500.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .errors import CfgpError, DomainError, NumericalError, TraceValidationError
from .gp import MixtureModel, predict
from .traces import ActionPlan, Dataset, Event, History

__all__ = ["create_app"]


class EventIn(BaseModel):
    t: float
    y: float | None = None
    a: str | None = None


class HistoryIn(BaseModel):
    events: list[EventIn]
    cut_time: float


class ActionIn(BaseModel):
    type: str
    time: float


class PlanIn(BaseModel):
    actions: list[ActionIn] = Field(default_factory=list)


class PredictIn(BaseModel):
    history: HistoryIn
    plan: PlanIn = Field(default_factory=PlanIn)
    query_times: list[float]
    mode: str = "mixture"


def _to_history(payload: HistoryIn, trace_id: str = "request") -> History:
    events = tuple(Event(t=ev.t, y=ev.y, a=ev.a) for ev in payload.events)
    return History(trace_id=trace_id, cut_time=payload.cut_time, events=events)


def _trace_summary(trace, default_cut: float) -> dict:
    outcomes = trace.outcome_events()
    actions = trace.action_events()
    return {
        "id": trace.id,
        "tau": trace.tau,
        "default_cut": default_cut,
        "n_outcomes": len(outcomes),
        "n_actions": len(actions),
    }


def create_app(
    model: MixtureModel,
    dataset: Dataset,
    model_id: str = "model",
    default_cut: float | None = None,
) -> FastAPI:
    """Build the prediction app around a fixed model and trace corpus."""
    traces = {tr.id: tr for tr in dataset.traces}
    if default_cut is None:
        # Choosing half the longest horizon keeps the default cut interior
        # to every trace in typical corpora.
        default_cut = max((tr.tau for tr in dataset.traces), default=0.0) / 2.0

    app = FastAPI(title="cfgp prediction service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def _on_validation(request, exc):
        details = [
            {"field": ".".join(str(p) for p in err.get("loc", ())),
             "message": err.get("msg", "invalid")}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"error": "validation", "details": details})

    @app.exception_handler(CfgpError)
    async def _on_domain(request, exc):
        if isinstance(exc, (DomainError, TraceValidationError)):
            return JSONResponse(status_code=400, content={"error": type(exc).__name__, "message": str(exc)})
        return JSONResponse(status_code=500, content={"error": type(exc).__name__, "message": str(exc)})

    @app.exception_handler(Exception)
    async def _on_unexpected(request, exc):
        return JSONResponse(status_code=500, content={"error": type(exc).__name__, "message": str(exc)})

    @app.get("/api/traces")
    def list_traces():
        return {
            "model_id": model_id,
            "traces": [_trace_summary(traces[tid], default_cut) for tid in sorted(traces)],
        }

    @app.get("/api/trace/{trace_id}")
    def get_trace(trace_id: str):
        trace = traces.get(trace_id)
        if trace is None:
            return JSONResponse(
                status_code=404,
                content={"error": "unknown_trace", "message": f"no trace with id {trace_id!r}"},
            )
        events = []
        for ev in trace.events:
            rec = {"t": ev.t}
            if ev.y is not None:
                rec["y"] = ev.y
            if ev.a is not None:
                rec["a"] = ev.a
            events.append(rec)
        return {"id": trace.id, "tau": trace.tau, "default_cut": default_cut, "events": events}

    @app.get("/api/model")
    def model_info():
        return {
            "model_id": model_id,
            "n_components": model.n_components,
            "weights": [float(w) for w in model.weights],
            "action_types": sorted(dataset.action_vocabulary),
            "has_event_action_model": model.event_action_model is not None,
        }

    @app.post("/api/predict")
    def do_predict(body: PredictIn):
        mode = {"map_class": "map", "map": "map", "mixture": "mixture"}.get(body.mode)
        if mode is None:
            return JSONResponse(
                status_code=400,
                content={"error": "DomainError",
                         "message": f"mode must be 'mixture' or 'map_class', got {body.mode!r}"},
            )
        history = _to_history(body.history)
        plan = ActionPlan(tuple((a.type, a.time) for a in body.plan.actions))
        try:
            post = predict(model, history, plan, body.query_times, mode=mode)
        except (DomainError, TraceValidationError) as exc:
            return JSONResponse(status_code=400, content={"error": type(exc).__name__, "message": str(exc)})
        except NumericalError as exc:
            return JSONResponse(status_code=500, content={"error": "NumericalError", "message": str(exc)})
        # Probabilities can underflow to exactly 0; floor before the log so
        # the JSON payload stays finite.
        log_post = np.log(np.maximum(post.class_probabilities, 1e-300))
        return {
            "times": [float(t) for t in post.query_times],
            "mean": [float(v) for v in post.mean],
            "lower95": [float(v) for v in post.lower],
            "upper95": [float(v) for v in post.upper],
            "class_log_posterior": [float(v) for v in log_post],
            "model_id": model_id,
        }

    return app
