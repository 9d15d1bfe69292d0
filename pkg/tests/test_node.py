"""HTTP node: RBAC, rate limiting, audit log, endpoint wiring."""

import base64
import hashlib
import io

import numpy as np
import pytest
from fastapi.testclient import TestClient

from weathervane import cas, forecast, ledger, node, sim
from weathervane.ledger import Role
from weathervane.node import ApiToken, NodeConfig, RateLimiter, rate_limit_check

OWNER = ledger.account_id("owner")
ADMIN = ledger.account_id("admin")
CLIENT = ledger.account_id("client")
VOTER = ledger.account_id("voter")
USER = ledger.account_id("user")

TOKENS = {
    "owner-token": (OWNER, Role.OWNER),
    "admin-token": (ADMIN, Role.ADMIN),
    "client-token": (CLIENT, Role.CLIENT),
    "voter-token": (VOTER, Role.CLIENT),
    "user-token": (USER, Role.USER),
}


def build_state():
    state = ledger.genesis(OWNER)
    ledger.add_admin(state, OWNER, ADMIN)
    ledger.add_client(state, ADMIN, CLIENT)
    ledger.add_client(state, ADMIN, VOTER)
    state.accounts[VOTER].reputation = 100
    return state


@pytest.fixture
def service(tmp_path):
    state = build_state()
    store = cas.BlobStore(tmp_path / "blobs")
    config = NodeConfig(
        tokens=[ApiToken(t, acct, role) for t, (acct, role) in TOKENS.items()],
        limiter_capacity=1000, limiter_refill_per_second=1000.0)
    app = node.create_app(state, store, config)
    client = TestClient(app, raise_server_exceptions=False)
    return client, state, store, app


def auth(token):
    return {"Authorization": f"Bearer {token}"}


def model_b64():
    data = sim.generate_weather(3, 200)
    model = forecast.fit_forecaster("ar", forecast.impute_missing(data), order=4)
    return base64.b64encode(forecast.encode_model(model)).decode()


def denials(app):
    return [r for r in app.state.node.audit if r.decision != "allowed"]


# --- authorization -------------------------------------------------------------------

def test_user_role_cannot_submit_models_403_and_single_audit_record(service):
    client, state, _, app = service
    digest = ledger.state_digest(state)
    resp = client.post("/models", headers=auth("user-token"),
                       json={"model_b64": model_b64(), "kind": "regression"})
    assert resp.status_code == 403
    assert resp.json()["error"] == "forbidden"
    records = [r for r in denials(app) if r.decision == "denied-403"]
    assert len(records) == 1
    assert records[0].account == USER
    assert records[0].endpoint == "/models"
    assert ledger.state_digest(state) == digest  # denied request mutated nothing


def test_missing_or_unknown_token_401(service):
    client, _, _, app = service
    assert client.get("/primary").status_code == 401
    assert client.get("/primary", headers=auth("made-up")).status_code == 401
    assert len([r for r in denials(app) if r.decision == "denied-401"]) == 2


def test_role_ladder_on_account_endpoints(service):
    client, state, _, _ = service
    new_admin = ledger.account_id("new-admin")
    assert client.post("/accounts/admins", headers=auth("admin-token"),
                       json={"account": new_admin}).status_code == 403
    assert client.post("/accounts/admins", headers=auth("owner-token"),
                       json={"account": new_admin}).status_code == 201
    assert state.accounts[new_admin].role is Role.ADMIN

    new_client = ledger.account_id("new-client")
    assert client.post("/accounts/clients", headers=auth("user-token"),
                       json={"account": new_client}).status_code == 403
    assert client.post("/accounts/clients", headers=auth("admin-token"),
                       json={"account": new_client}).status_code == 201
    assert state.accounts[new_client].reputation == 0


def test_ledger_level_denial_maps_to_403_with_audit(service):
    client, state, _, app = service
    # admins hold the node role for /models but the ledger restricts
    # submissions to clients
    resp = client.post("/models", headers=auth("admin-token"),
                       json={"model_b64": model_b64(), "kind": "regression"})
    assert resp.status_code == 403
    assert resp.json()["error"] == "unauthorized"
    assert len([r for r in denials(app) if r.decision == "denied-403"]) == 1
    assert state.models == {}


# --- submission and scoring flow ---------------------------------------------------------

def test_submit_model_returns_cid_of_uploaded_bytes(service):
    client, state, store, _ = service
    payload = model_b64()
    resp = client.post("/models", headers=auth("client-token"),
                       json={"model_b64": payload, "kind": "regression"})
    assert resp.status_code == 201
    body = resp.json()
    raw = base64.b64decode(payload)
    independent = "sha256-" + hashlib.sha256(raw).hexdigest()
    assert body["cid"] == independent
    assert store.get(cas.Cid.parse(body["cid"])) == raw
    assert state.models[body["model_id"]].status is ledger.ModelStatus.OPEN


def test_duplicate_submission_conflicts(service):
    client, _, _, _ = service
    payload = model_b64()
    first = client.post("/models", headers=auth("client-token"),
                        json={"model_b64": payload, "kind": "regression"})
    assert first.status_code == 201
    second = client.post("/models", headers=auth("client-token"),
                         json={"model_b64": payload, "kind": "regression"})
    assert second.status_code == 409
    assert second.json()["error"] == "duplicate-cid"


def test_score_flow_finalizes_and_promotes(service):
    client, state, _, _ = service
    mid = client.post("/models", headers=auth("client-token"),
                      json={"model_b64": model_b64(), "kind": "regression"}
                      ).json()["model_id"]
    resp = client.post(f"/models/{mid}/score", headers=auth("voter-token"),
                       json={"score_bp": 8000})
    assert resp.status_code == 200
    assert resp.json() == {"model_id": mid, "status": "primary",
                           "final_score_bp": 8000}
    primary = client.get("/primary", headers=auth("user-token"))
    assert primary.status_code == 200
    assert primary.json()["model_id"] == mid

    record = client.get(f"/models/{mid}", headers=auth("user-token")).json()
    assert record["votes"] == [{"voter": VOTER, "score_bp": 8000,
                                "reputation": 100}]


def test_score_validation_and_closed_voting(service):
    client, _, _, _ = service
    mid = client.post("/models", headers=auth("client-token"),
                      json={"model_b64": model_b64(), "kind": "regression"}
                      ).json()["model_id"]
    bad = client.post(f"/models/{mid}/score", headers=auth("voter-token"),
                      json={"score_bp": 10001})
    assert bad.status_code == 422
    client.post(f"/models/{mid}/score", headers=auth("voter-token"),
                json={"score_bp": 5000})
    late = client.post(f"/models/{mid}/score", headers=auth("admin-token"),
                       json={"score_bp": 1})
    assert late.status_code == 409
    assert late.json()["error"] == "voting-closed"


def test_get_primary_empty_404(service):
    client, _, _, _ = service
    resp = client.get("/primary", headers=auth("user-token"))
    assert resp.status_code == 404


def test_unknown_model_404(service):
    client, _, _, _ = service
    assert client.get("/models/31337",
                      headers=auth("user-token")).status_code == 404


# --- forecast endpoint ---------------------------------------------------------------------

def promote_primary(client):
    mid = client.post("/models", headers=auth("client-token"),
                      json={"model_b64": model_b64(), "kind": "regression"}
                      ).json()["model_id"]
    client.post(f"/models/{mid}/score", headers=auth("voter-token"),
                json={"score_bp": 9000})
    return mid


def test_forecast_runs_primary_model_on_submitted_rows(service):
    client, _, _, _ = service
    promote_primary(client)
    data = sim.generate_weather(9, 64)
    buffer = io.StringIO()
    forecast.write_csv(data, buffer)
    resp = client.post("/forecast", headers=auth("user-token"),
                       json={"csv": buffer.getvalue(), "horizon": 6})
    assert resp.status_code == 200
    values = resp.json()["temperature_forecast"]
    assert len(values) == 6
    assert all(isinstance(v, float) for v in values)


def test_forecast_accepts_json_rows(service):
    client, _, _, _ = service
    promote_primary(client)
    data = sim.generate_weather(9, 64)
    rows = []
    for i in range(data.n_rows):
        row = {"Timestamp": str(data.timestamps[i])}
        row.update({c: float(data.numeric[i, j])
                    for j, c in enumerate(forecast.NUMERIC_COLUMNS)})
        row["Summary"] = str(data.categorical["Summary"][i])
        rows.append(row)
    resp = client.post("/forecast", headers=auth("user-token"),
                       json={"rows": rows, "horizon": 3})
    assert resp.status_code == 200
    assert len(resp.json()["temperature_forecast"]) == 3


def test_forecast_without_primary_404(service):
    client, _, _, _ = service
    resp = client.post("/forecast", headers=auth("user-token"),
                       json={"csv": "", "horizon": 3})
    assert resp.status_code == 404


# --- rate limiting ----------------------------------------------------------------------

def test_rate_limiter_bucket_arithmetic():
    limiter = RateLimiter(capacity=5, refill_per_second=1.0)
    now = 100.0
    assert all(rate_limit_check(limiter, "t", now) for _ in range(5))
    assert not rate_limit_check(limiter, "t", now)          # bucket drained
    assert not rate_limit_check(limiter, "t", now + 0.5)    # partial refill
    assert rate_limit_check(limiter, "t", now + 1.5)
    assert all(rate_limit_check(limiter, "t", now + 100.0) for _ in range(5))


def test_rate_limiter_is_per_token():
    limiter = RateLimiter(capacity=1, refill_per_second=0.001)
    assert rate_limit_check(limiter, "a", 0.0)
    assert not rate_limit_check(limiter, "a", 0.0)
    assert rate_limit_check(limiter, "b", 0.0)


def test_sixth_request_limited_with_audit_record(tmp_path):
    state = build_state()
    store = cas.BlobStore(tmp_path / "blobs")
    config = NodeConfig(
        tokens=[ApiToken("user-token", USER, Role.USER)],
        limiter_capacity=5, limiter_refill_per_second=0.000001)
    app = node.create_app(state, store, config)
    client = TestClient(app)
    statuses = [client.get("/models/0", headers=auth("user-token")).status_code
                for _ in range(6)]
    assert statuses == [404, 404, 404, 404, 404, 429]
    limited = [r for r in app.state.node.audit if r.decision == "limited-429"]
    assert len(limited) == 1
    assert limited[0].account == USER

    # 429 outcomes are visible through the admin log endpoint
    config2 = NodeConfig(tokens=[ApiToken("user-token", USER, Role.USER),
                                 ApiToken("admin-token", ADMIN, Role.ADMIN)],
                         limiter_capacity=5, limiter_refill_per_second=0.000001)
    app2 = node.create_app(build_state(), cas.BlobStore(tmp_path / "b2"), config2)
    client2 = TestClient(app2)
    for _ in range(6):
        client2.get("/models/0", headers=auth("user-token"))
    logs = client2.get("/admin/logs", headers=auth("admin-token")).json()["records"]
    assert [r["decision"] for r in logs].count("limited-429") == 1


# --- config validation ------------------------------------------------------------------

def test_token_account_mapping_must_be_injective():
    with pytest.raises(ValueError):
        NodeConfig(tokens=[ApiToken("a", CLIENT, Role.CLIENT),
                           ApiToken("b", CLIENT, Role.CLIENT)])
    with pytest.raises(ValueError):
        NodeConfig(tokens=[ApiToken("a", CLIENT, Role.CLIENT),
                           ApiToken("a", USER, Role.USER)])


def test_audit_log_replay_reconstructs_denial_counts(service):
    client, _, _, app = service
    client.get("/primary")                                    # 401
    client.post("/models", headers=auth("user-token"),
                json={"model_b64": "AA==", "kind": "regression"})  # 403
    client.get("/admin/logs", headers=auth("user-token"))     # 403
    by_decision = {}
    for record in app.state.node.audit:
        by_decision[record.decision] = by_decision.get(record.decision, 0) + 1
    assert by_decision.get("denied-401") == 1
    assert by_decision.get("denied-403") == 2
