"""HTTP facade over the core package.

Every endpoint is stateless request/response: a run executes a scenario and
returns the report plus the ledger bytes, audit and inspect re-verify ledger
bytes sent by the client.  Nothing is stored server side, so results depend
only on the request body.
"""

from __future__ import annotations

import base64
import binascii
import json

from fastapi import FastAPI
from pydantic import BaseModel

from . import __version__
from .auditor import audit, inspect
from .coinmodel import CoinId, FormatError
from .ledger import KeyRegistry
from .profiles import get_profile
from .scenario import ScenarioEngine, ScenarioError


class RunRequest(BaseModel):
    scenario: str
    profile: str = "standard"
    seed: int = 0
    difficulty: int = 12
    confirm_depth: int = 1


class RunResponse(BaseModel):
    status: str                  # ok | assertion-failure | script-error
    report: str = ""
    ledger_b64: str = ""
    keys_json: str = ""
    detail: str = ""


class AuditRequest(BaseModel):
    ledger_b64: str
    profile: str = "standard"
    keys_json: str = ""


class AuditResponse(BaseModel):
    status: str                  # ok | violation | format-error
    report: str = ""
    violation: str = ""


class InspectRequest(BaseModel):
    ledger_b64: str
    sn: str                      # hex
    val: int
    bank: str                    # hex
    profile: str = "standard"
    keys_json: str = ""


class InspectResponse(BaseModel):
    status: str                  # ok | not-found | invalid | format-error
    report: str = ""


app = FastAPI(title="tcash", version=__version__)


def _registry(keys_json: str) -> KeyRegistry | None:
    if not keys_json:
        return None
    return KeyRegistry.from_mapping(json.loads(keys_json))


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/run", response_model=RunResponse)
def run(request: RunRequest) -> RunResponse:
    try:
        profile = get_profile(request.profile)
        engine = ScenarioEngine(
            request.scenario,
            profile,
            seed=request.seed,
            difficulty=request.difficulty,
            confirm_depth=request.confirm_depth,
        )
        result = engine.run()
    except (ScenarioError, ValueError) as exc:
        return RunResponse(status="script-error", detail=str(exc))
    return RunResponse(
        status="ok" if result.ok else "assertion-failure",
        report=result.report,
        ledger_b64=base64.b64encode(result.ledger_bytes).decode(),
        keys_json=json.dumps(result.keys_mapping, sort_keys=True),
    )


@app.post("/audit", response_model=AuditResponse)
def audit_endpoint(request: AuditRequest) -> AuditResponse:
    try:
        profile = get_profile(request.profile)
        data = base64.b64decode(request.ledger_b64)
        keys = _registry(request.keys_json)
    except (ValueError, binascii.Error, KeyError) as exc:
        return AuditResponse(status="format-error", violation=str(exc))
    result = audit(data, profile, keys)
    if result.ok:
        return AuditResponse(status="ok", report=result.report)
    status = "format-error" if result.violation.startswith("format:") else "violation"
    return AuditResponse(status=status, report=result.report, violation=result.violation)


@app.post("/inspect", response_model=InspectResponse)
def inspect_endpoint(request: InspectRequest) -> InspectResponse:
    try:
        profile = get_profile(request.profile)
        data = base64.b64decode(request.ledger_b64)
        keys = _registry(request.keys_json)
        coin_id = CoinId(sn=int(request.sn, 16), val=request.val, bank=int(request.bank, 16))
    except (ValueError, binascii.Error, KeyError) as exc:
        return InspectResponse(status="format-error", report=str(exc))
    try:
        result = inspect(data, profile, coin_id, keys)
    except FormatError as exc:
        return InspectResponse(status="format-error", report=str(exc))
    if not result.found:
        return InspectResponse(status="not-found", report=result.report)
    return InspectResponse(status="ok" if result.ok else "invalid", report=result.report)
