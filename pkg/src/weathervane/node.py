"""HTTP/JSON service exposing the ledger, blob store, and forecaster.

Access control is a static bearer-token table mapping each token injectively
to an account and role; endpoints declare a minimum role on the ladder
``user < client < admin < owner``. A request below the bar is answered with
403 and audited; an unknown token gets 401; a token that exhausts its bucket
gets 429. Every one of those denials produces exactly one audit record, and a
denied request never touches ledger state. All ledger mutations are funnelled
through one lock, so concurrent writers serialize.
"""

from __future__ import annotations

import base64
import binascii
import io
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from fastapi import Depends, FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import forecast, ledger
from .cas import BlobStore, Cid
from .errors import (
    AlreadyVoted,
    BindFailure,
    DuplicateAccount,
    DuplicateCid,
    ForecastError,
    InvalidScore,
    LedgerError,
    SelfVote,
    Unauthorized,
    UnknownModel,
    VotingClosed,
)
from .ledger import LedgerState, Role

ROLE_NAMES = {"user": Role.USER, "client": Role.CLIENT,
              "admin": Role.ADMIN, "owner": Role.OWNER}


@dataclass(frozen=True)
class ApiToken:
    token: str
    account: str
    role: Role


@dataclass
class NodeConfig:
    """Service settings; tokens are provisioned up front, never self-issued."""

    tokens: list[ApiToken]
    host: str = "127.0.0.1"
    port: int = 8420
    limiter_capacity: int = 30
    limiter_refill_per_second: float = 1.0

    def __post_init__(self):
        accounts = [t.account for t in self.tokens]
        if len(set(accounts)) != len(accounts):
            raise ValueError("token->account mapping must be injective")
        tokens = [t.token for t in self.tokens]
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate token strings")


@dataclass
class AuditRecord:
    timestamp: float
    account: str | None
    endpoint: str
    decision: str  # "allowed" | "denied-401" | "denied-403" | "limited-429"
    detail: str

    def to_dict(self) -> dict:
        return {"timestamp": self.timestamp, "account": self.account,
                "endpoint": self.endpoint, "decision": self.decision,
                "detail": self.detail}


@dataclass
class _Bucket:
    level: float
    last_refill: float


class RateLimiter:
    """Per-token token bucket: ``capacity`` burst, steady refill per second."""

    def __init__(self, capacity: int, refill_per_second: float):
        if capacity < 1 or refill_per_second <= 0:
            raise ValueError("capacity must be >= 1 and refill positive")
        self.capacity = capacity
        self.refill_per_second = refill_per_second
        self._buckets: dict[str, _Bucket] = {}

    def check(self, token: str, now: float) -> bool:
        """Consume one unit if available; False means the caller is limited."""
        bucket = self._buckets.get(token)
        if bucket is None:
            bucket = self._buckets[token] = _Bucket(float(self.capacity), now)
        elapsed = max(0.0, now - bucket.last_refill)
        bucket.level = min(float(self.capacity),
                           bucket.level + elapsed * self.refill_per_second)
        bucket.last_refill = now
        if bucket.level >= 1.0:
            bucket.level -= 1.0
            return True
        return False


def rate_limit_check(limiter: RateLimiter, token: str, now: float) -> bool:
    return limiter.check(token, now)


class ApiError(Exception):
    def __init__(self, status: int, code: str, detail: str):
        super().__init__(detail)
        self.status = status
        self.code = code
        self.detail = detail


_LEDGER_HTTP_STATUS = {
    Unauthorized: 403,
    DuplicateAccount: 409,
    DuplicateCid: 409,
    UnknownModel: 404,
    SelfVote: 409,
    AlreadyVoted: 409,
    VotingClosed: 409,
    InvalidScore: 422,
}


# --- request bodies -----------------------------------------------------------

class AccountBody(BaseModel):
    account: str = Field(min_length=64, max_length=64)


class ModelBody(BaseModel):
    model_b64: str
    kind: str


class ScoreBody(BaseModel):
    score_bp: int


class ForecastBody(BaseModel):
    horizon: int = 24
    csv: str | None = None
    rows: list[dict] | None = None


@dataclass
class _NodeState:
    ledger: LedgerState
    store: BlobStore
    config: NodeConfig
    clock: Callable[[], float]
    limiter: RateLimiter
    tokens: dict[str, ApiToken]
    audit: list[AuditRecord] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def record(self, account: str | None, endpoint: str, decision: str,
               detail: str) -> None:
        self.audit.append(AuditRecord(self.clock(), account, endpoint,
                                      decision, detail))


def create_app(state: LedgerState, store: BlobStore, config: NodeConfig,
               clock: Callable[[], float] = time.monotonic) -> FastAPI:
    """Build the service around an existing ledger and blob store."""
    app = FastAPI(title="weathervane node", docs_url=None, redoc_url=None)
    node = _NodeState(
        ledger=state, store=store, config=config, clock=clock,
        limiter=RateLimiter(config.limiter_capacity, config.limiter_refill_per_second),
        tokens={t.token: t for t in config.tokens},
    )
    app.state.node = node

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"error": exc.code, "detail": exc.detail})

    def require(min_role: Role):
        def dependency(request: Request) -> ApiToken:
            endpoint = request.url.path
            header = request.headers.get("authorization", "")
            token_str = header.removeprefix("Bearer ").strip() if header else ""
            token = node.tokens.get(token_str)
            if token is None:
                node.record(None, endpoint, "denied-401", "unknown or missing token")
                raise ApiError(401, "unknown-token", "unknown or missing bearer token")
            if not node.limiter.check(token.token, node.clock()):
                node.record(token.account, endpoint, "limited-429",
                            "rate limit exceeded")
                raise ApiError(429, "rate-limited", "rate limit exceeded")
            if token.role < min_role:
                node.record(token.account, endpoint, "denied-403",
                            f"requires role {min_role.name.lower()}")
                raise ApiError(403, "forbidden",
                               f"endpoint requires role {min_role.name.lower()}")
            return token
        return Depends(dependency)

    def run_ledger(endpoint: str, token: ApiToken, fn):
        """Serialize a ledger mutation; map domain errors to HTTP errors."""
        with node.lock:
            try:
                result = fn()
            except LedgerError as exc:
                status = _LEDGER_HTTP_STATUS.get(type(exc), 422)
                if status == 403:
                    node.record(token.account, endpoint, "denied-403", str(exc))
                raise ApiError(status, exc.code, str(exc))
            node.record(token.account, endpoint, "allowed", "")
            return result

    def model_payload(rec: ledger.ModelRecord) -> dict:
        return {
            "model_id": rec.model_id,
            "cid": rec.cid.text,
            "submitter": rec.submitter,
            "kind": rec.kind,
            "status": rec.status.value,
            "final_score_bp": rec.final_score_bp,
            "votes": [{"voter": v.voter, "score_bp": v.score_bp,
                       "reputation": v.voter_reputation_at_cast} for v in rec.votes],
        }

    @app.post("/accounts/admins", status_code=201)
    def add_admin(body: AccountBody, token: ApiToken = require(Role.OWNER)):
        run_ledger("/accounts/admins", token,
                   lambda: ledger.add_admin(node.ledger, token.account, body.account))
        return {"account": body.account, "role": "admin"}

    @app.post("/accounts/clients", status_code=201)
    def add_client(body: AccountBody, token: ApiToken = require(Role.ADMIN)):
        run_ledger("/accounts/clients", token,
                   lambda: ledger.add_client(node.ledger, token.account, body.account))
        return {"account": body.account, "role": "client"}

    @app.post("/models", status_code=201)
    def submit_model(body: ModelBody, token: ApiToken = require(Role.CLIENT)):
        try:
            blob = base64.b64decode(body.model_b64, validate=True)
        except (binascii.Error, ValueError):
            raise ApiError(422, "bad-base64", "model_b64 is not valid base64")

        def action():
            cid = node.store.put(blob)
            return ledger.submit_model(node.ledger, token.account, cid, body.kind), cid

        (model_id, _), cid = run_ledger("/models", token, action)
        return {"model_id": model_id, "cid": cid.text}

    @app.post("/models/{model_id}/score")
    def cast_score(model_id: int, body: ScoreBody,
                   token: ApiToken = require(Role.CLIENT)):
        run_ledger(f"/models/{model_id}/score", token,
                   lambda: ledger.cast_score(node.ledger, token.account,
                                             model_id, body.score_bp))
        rec = node.ledger.models[model_id]
        return {"model_id": model_id, "status": rec.status.value,
                "final_score_bp": rec.final_score_bp}

    @app.get("/models/{model_id}")
    def get_model(model_id: int, token: ApiToken = require(Role.USER)):
        rec = node.ledger.models.get(model_id)
        if rec is None:
            raise ApiError(404, "unknown-model", f"no model {model_id}")
        return model_payload(rec)

    @app.get("/primary")
    def get_primary(kind: str = "regression",
                    token: ApiToken = require(Role.USER)):
        rec = node.ledger.primary_record(kind) if kind in ledger.MODEL_KINDS else None
        if rec is None:
            raise ApiError(404, "no-primary", f"no primary model of kind {kind!r}")
        return model_payload(rec)

    @app.post("/forecast")
    def run_forecast(body: ForecastBody, token: ApiToken = require(Role.USER)):
        rec = node.ledger.primary_record("regression")
        if rec is None:
            raise ApiError(404, "no-primary", "no primary regression model")
        try:
            if body.csv is not None:
                data = forecast.read_csv(io.StringIO(body.csv))
            elif body.rows:
                data = _dataset_from_rows(body.rows)
            else:
                raise ApiError(422, "bad-request", "provide csv or rows")
            model = forecast.decode_model(node.store.get(rec.cid))
            context = forecast.impute_missing(data)
            predicted = forecast.predict(model, context, body.horizon)
        except ApiError:
            raise
        except (ForecastError, ValueError, KeyError) as exc:
            code = getattr(exc, "code", "bad-request")
            raise ApiError(422, code, str(exc))
        return {"temperature_forecast": [float(v) for v in predicted],
                "model_id": rec.model_id, "cid": rec.cid.text}

    @app.get("/admin/logs")
    def get_logs(token: ApiToken = require(Role.ADMIN)):
        return {"records": [r.to_dict() for r in node.audit]}

    return app


def _dataset_from_rows(rows: list[dict]) -> forecast.Dataset:
    timestamps, numeric, summary = [], [], []
    for row in rows:
        timestamps.append(np.datetime64(row["Timestamp"], "s"))
        numeric.append([float(row[c]) if row.get(c) is not None else np.nan
                        for c in forecast.NUMERIC_COLUMNS])
        summary.append(row.get("Summary"))
    return forecast.Dataset(
        timestamps=np.array(timestamps),
        numeric=np.array(numeric, dtype=np.float64),
        categorical={"Summary": np.array(summary, dtype=object)},
    )


def serve(state: LedgerState, store: BlobStore, config: NodeConfig) -> None:
    """Run the service until interrupted."""
    import uvicorn

    app = create_app(state, store, config)
    try:
        uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    except OSError as exc:
        raise BindFailure(f"cannot bind {config.host}:{config.port}: {exc}") from exc
