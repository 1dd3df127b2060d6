import asyncio
import base64
import json
from importlib import resources

import httpx
import pytest

from tcash.service import app


def call(path, payload):
    async def go():
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport, base_url="http://test") as client:
            response = await client.post(path, json=payload)
            return response

    return asyncio.run(go())


def get(path):
    async def go():
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport, base_url="http://test") as client:
            return await client.get(path)

    return asyncio.run(go())


def builtin(name):
    return resources.files("tcash.scenarios").joinpath(f"{name}.txt").read_text()


@pytest.fixture(scope="module")
def happy_run():
    response = call(
        "/run",
        {"scenario": builtin("happy_path"), "profile": "toy", "seed": 12, "difficulty": 10},
    )
    assert response.status_code == 200
    return response.json()


class TestHealth:
    def test_health(self):
        body = get("/health").json()
        assert body["status"] == "ok"


class TestRun:
    def test_happy_path_ok(self, happy_run):
        assert happy_run["status"] == "ok"
        assert "result: PASS" in happy_run["report"]
        assert len(base64.b64decode(happy_run["ledger_b64"])) > 0
        keys = json.loads(happy_run["keys_json"])
        assert keys["banks"]

    def test_failing_assertion_reported(self):
        scenario = "bank b\naccount a b 1000\nwallet a\nmint a c 500\nassert-balance a 9\n"
        body = call("/run", {"scenario": scenario, "profile": "toy", "difficulty": 8}).json()
        assert body["status"] == "assertion-failure"
        assert "FAIL" in body["report"]

    def test_script_error_names_line(self):
        body = call("/run", {"scenario": "bank b\nnonsense\n", "profile": "toy"}).json()
        assert body["status"] == "script-error"
        assert "line 2" in body["detail"]

    def test_unknown_profile(self):
        body = call("/run", {"scenario": "bank b\n", "profile": "huge"}).json()
        assert body["status"] == "script-error"

    def test_missing_field_is_422(self):
        assert call("/run", {"profile": "toy"}).status_code == 422


class TestAudit:
    def test_ok(self, happy_run):
        body = call(
            "/audit",
            {
                "ledger_b64": happy_run["ledger_b64"],
                "profile": "toy",
                "keys_json": happy_run["keys_json"],
            },
        ).json()
        assert body["status"] == "ok"
        assert "audit: OK" in body["report"]

    def test_tampered_byte_is_violation(self, happy_run):
        data = bytearray(base64.b64decode(happy_run["ledger_b64"]))
        data[200] ^= 0xFF
        body = call(
            "/audit",
            {
                "ledger_b64": base64.b64encode(bytes(data)).decode(),
                "profile": "toy",
                "keys_json": happy_run["keys_json"],
            },
        ).json()
        assert body["status"] == "violation"
        assert body["violation"]

    def test_empty_ledger_is_format_error(self):
        body = call("/audit", {"ledger_b64": "", "profile": "toy"}).json()
        assert body["status"] == "format-error"

    def test_missing_keys_flagged(self, happy_run):
        body = call(
            "/audit", {"ledger_b64": happy_run["ledger_b64"], "profile": "toy"}
        ).json()
        assert body["status"] == "violation"
        assert "missing-bank-key" in body["violation"]


class TestInspect:
    def _coin_fields(self, report):
        for line in report.splitlines():
            if line.strip().startswith("c1:"):
                return dict(part.split("=") for part in line.split()[1:])
        raise AssertionError("coin line not found")

    def test_known_coin_chain(self, happy_run):
        fields = self._coin_fields(happy_run["report"])
        body = call(
            "/inspect",
            {
                "ledger_b64": happy_run["ledger_b64"],
                "sn": fields["sn"],
                "val": int(fields["val"]),
                "bank": fields["bank"],
                "profile": "toy",
                "keys_json": happy_run["keys_json"],
            },
        ).json()
        assert body["status"] == "ok"
        assert body["report"].count("hop ") == 3  # genesis, transfer, redeem
        assert "link=ok dlp=ok sig=ok" in body["report"]

    def test_unknown_coin(self, happy_run):
        body = call(
            "/inspect",
            {
                "ledger_b64": happy_run["ledger_b64"],
                "sn": "ff",
                "val": 500,
                "bank": "22",
                "profile": "toy",
            },
        ).json()
        assert body["status"] == "not-found"
