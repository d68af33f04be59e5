"""HTTP prediction service endpoints."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from cfgp.gp import predict
from cfgp.service import create_app
from cfgp.simulator import SimConfig, policy_a, simulate_regime, true_mixture_model
from cfgp.traces import ActionPlan, Event, History, truncate_history


@pytest.fixture(scope="module")
def setup():
    model = true_mixture_model()
    dataset, _ = simulate_regime(SimConfig(), policy_a(), 6, seed=21)
    app = create_app(model, dataset, model_id="demo-model")
    client = TestClient(app, raise_server_exceptions=False)
    return model, dataset, client


def history_payload(trace, cut):
    return {
        "events": [
            {"t": ev.t, "y": ev.y, "a": ev.a} for ev in trace.events if ev.t < cut
        ],
        "cut_time": cut,
    }


class TestTraceEndpoints:
    def test_list_traces(self, setup):
        _, dataset, client = setup
        resp = client.get("/api/traces")
        assert resp.status_code == 200
        body = resp.json()
        assert body["model_id"] == "demo-model"
        assert len(body["traces"]) == 6
        entry = body["traces"][0]
        assert set(entry) == {"id", "tau", "default_cut", "n_outcomes", "n_actions"}
        assert entry["default_cut"] == pytest.approx(12.0)  # half the 24h horizon

    def test_get_trace(self, setup):
        _, dataset, client = setup
        tid = dataset.traces[0].id
        resp = client.get(f"/api/trace/{tid}")
        assert resp.status_code == 200
        body = resp.json()
        assert body["id"] == tid
        assert body["tau"] == 24.0
        assert len(body["events"]) == len(dataset.traces[0].events)

    def test_unknown_trace_404(self, setup):
        _, _, client = setup
        resp = client.get("/api/trace/not-a-trace")
        assert resp.status_code == 404
        assert resp.json()["error"] == "unknown_trace"

    def test_model_info(self, setup):
        model, _, client = setup
        resp = client.get("/api/model")
        assert resp.status_code == 200
        body = resp.json()
        assert body["n_components"] == 3
        assert body["action_types"] == ["tx"]
        assert len(body["weights"]) == 3


class TestPredictEndpoint:
    def test_matches_library_predict(self, setup):
        model, dataset, client = setup
        trace = dataset.traces[0]
        cut = 12.0
        q = [13.0, 16.0, 20.0, 24.0]
        plan = [{"type": "treatment", "time": 14.0}]
        resp = client.post(
            "/api/predict",
            json={
                "history": history_payload(trace, cut),
                "plan": {"actions": plan},
                "query_times": q,
                "mode": "mixture",
            },
        )
        assert resp.status_code == 200
        body = resp.json()
        assert set(body) == {
            "times", "mean", "lower95", "upper95", "class_log_posterior", "model_id",
        }
        oracle = predict(
            model,
            truncate_history(trace, cut),
            ActionPlan((("treatment", 14.0),)),
            q,
        )
        assert np.allclose(body["mean"], oracle.mean)
        assert np.allclose(body["lower95"], oracle.lower)
        assert np.allclose(body["upper95"], oracle.upper)
        assert np.allclose(
            np.exp(body["class_log_posterior"]), oracle.class_probabilities
        )
        assert body["model_id"] == "demo-model"

    def test_empty_plan_default(self, setup):
        _, dataset, client = setup
        resp = client.post(
            "/api/predict",
            json={
                "history": history_payload(dataset.traces[1], 12.0),
                "query_times": [15.0],
            },
        )
        assert resp.status_code == 200

    def test_map_class_mode(self, setup):
        model, dataset, client = setup
        trace = dataset.traces[2]
        body = {
            "history": history_payload(trace, 12.0),
            "query_times": [18.0],
            "mode": "map_class",
        }
        resp = client.post("/api/predict", json=body)
        assert resp.status_code == 200
        oracle = predict(
            model, truncate_history(trace, 12.0), ActionPlan(), [18.0], mode="map"
        )
        assert np.allclose(resp.json()["mean"], oracle.mean)

    def test_identical_requests_identical_responses(self, setup):
        _, dataset, client = setup
        body = {
            "history": history_payload(dataset.traces[3], 12.0),
            "query_times": list(np.linspace(12.5, 24.0, 24)),
        }
        r1 = client.post("/api/predict", json=body)
        r2 = client.post("/api/predict", json=body)
        assert r1.content == r2.content

    def test_query_before_cut_400(self, setup):
        _, dataset, client = setup
        resp = client.post(
            "/api/predict",
            json={
                "history": history_payload(dataset.traces[0], 12.0),
                "query_times": [5.0],
            },
        )
        assert resp.status_code == 400
        assert "message" in resp.json()

    def test_plan_before_cut_400(self, setup):
        _, dataset, client = setup
        resp = client.post(
            "/api/predict",
            json={
                "history": history_payload(dataset.traces[0], 12.0),
                "plan": {"actions": [{"type": "treatment", "time": 3.0}]},
                "query_times": [15.0],
            },
        )
        assert resp.status_code == 400

    def test_malformed_body_400(self, setup):
        _, _, client = setup
        resp = client.post("/api/predict", json={"query_times": "zebra"})
        assert resp.status_code == 400
        body = resp.json()
        assert body["error"] == "validation"
        assert body["details"]

    def test_unknown_mode_400(self, setup):
        _, dataset, client = setup
        resp = client.post(
            "/api/predict",
            json={
                "history": history_payload(dataset.traces[0], 12.0),
                "query_times": [15.0],
                "mode": "oracle",
            },
        )
        assert resp.status_code == 400

    def test_history_event_after_cut_400(self, setup):
        _, _, client = setup
        resp = client.post(
            "/api/predict",
            json={
                "history": {"events": [{"t": 13.0, "y": 1.0}], "cut_time": 12.0},
                "query_times": [15.0],
            },
        )
        assert resp.status_code == 400

    def test_cors_headers_present(self, setup):
        _, _, client = setup
        resp = client.get("/api/model", headers={"Origin": "http://localhost:5173"})
        assert resp.headers.get("access-control-allow-origin") == "*"
