"""Command line front end.

Each command is a thin client of the HTTP service: it reads local files,
posts a request (to an in-process app by default, or to --server), and maps
the response onto files and exit codes:

    0 success, 2 usage, 3 assertion failure, 4 validation violation, 5 I/O
"""

from __future__ import annotations

import asyncio
import base64
import sys
from importlib import resources
from pathlib import Path

import click
import httpx

from .service import app as service_app

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ASSERTION = 3
EXIT_VIOLATION = 4
EXIT_IO = 5

_BUILTIN_PREFIX = "builtin:"


def _post(server: str | None, path: str, payload: dict) -> dict:
    async def go() -> dict:
        if server:
            transport = None
            base_url = server
        else:
            transport = httpx.ASGITransport(app=service_app)
            base_url = "http://tcash.local"
        async with httpx.AsyncClient(
            transport=transport, base_url=base_url, timeout=600.0
        ) as client:
            response = await client.post(path, json=payload)
            response.raise_for_status()
            return response.json()

    return asyncio.run(go())


def _read_scenario(source: str) -> str:
    if source.startswith(_BUILTIN_PREFIX):
        name = source[len(_BUILTIN_PREFIX) :]
        ref = resources.files("tcash.scenarios").joinpath(f"{name}.txt")
        if not ref.is_file():
            bundled = sorted(
                p.name[:-4] for p in resources.files("tcash.scenarios").iterdir()
                if p.name.endswith(".txt")
            )
            raise click.UsageError(
                f"no builtin scenario {name!r}; bundled: {', '.join(bundled)}"
            )
        return ref.read_text()
    path = Path(source)
    if not path.is_file():
        raise click.UsageError(f"scenario file not found: {source}")
    return path.read_text()


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        click.echo(f"cannot read {path}: {exc}", err=True)
        sys.exit(EXIT_IO)


def _load_keys(keys: str | None, ledger_path: str) -> str:
    """Explicit --keys wins; otherwise look for the sidecar next to the ledger."""
    candidate = Path(keys) if keys else Path(ledger_path + ".keys.json")
    if keys and not candidate.is_file():
        click.echo(f"cannot read keys file {keys}", err=True)
        sys.exit(EXIT_IO)
    if candidate.is_file():
        return candidate.read_text()
    return ""


@click.group()
@click.version_option(package_name="tcash")
def main() -> None:
    """Transferable fiat-backed electronic cash, simulated end to end."""


_profile_option = click.option(
    "--profile",
    type=click.Choice(["toy", "standard"]),
    default="standard",
    envvar="TCASH_PROFILE",
    show_default=True,
)
_server_option = click.option(
    "--server",
    default=None,
    envvar="TCASH_SERVER",
    help="Remote service URL; defaults to the in-process service.",
)


@main.command()
@_profile_option
@click.option("--seed", type=int, default=0, envvar="TCASH_SEED", show_default=True)
@click.option("--difficulty", type=int, default=12, envvar="TCASH_DIFFICULTY", show_default=True)
@click.option(
    "--confirm-depth", type=int, default=1, envvar="TCASH_CONFIRM_DEPTH", show_default=True
)
@click.option(
    "--scenario",
    required=True,
    envvar="TCASH_SCENARIO",
    help="Scenario file path, or builtin:<name> for a bundled one.",
)
@click.option(
    "--out-ledger", default="tcash-ledger.bin", envvar="TCASH_OUT_LEDGER", show_default=True
)
@click.option(
    "--out-report", default="tcash-report.txt", envvar="TCASH_OUT_REPORT", show_default=True
)
@click.option(
    "--out-keys",
    default=None,
    envvar="TCASH_OUT_KEYS",
    help="Bank key registry output [default: <out-ledger>.keys.json].",
)
@_server_option
def run(profile, seed, difficulty, confirm_depth, scenario, out_ledger, out_report, out_keys, server):
    """Execute a scenario; write the ledger, key registry and report."""
    scenario_text = _read_scenario(scenario)
    body = _post(
        server,
        "/run",
        {
            "scenario": scenario_text,
            "profile": profile,
            "seed": seed,
            "difficulty": difficulty,
            "confirm_depth": confirm_depth,
        },
    )
    if body["status"] == "script-error":
        raise click.UsageError(f"scenario error: {body['detail']}")
    try:
        Path(out_report).write_text(body["report"])
        Path(out_ledger).write_bytes(base64.b64decode(body["ledger_b64"]))
        Path(out_keys or out_ledger + ".keys.json").write_text(body["keys_json"])
    except OSError as exc:
        click.echo(f"cannot write outputs: {exc}", err=True)
        sys.exit(EXIT_IO)
    click.echo(body["report"], nl=False)
    sys.exit(EXIT_OK if body["status"] == "ok" else EXIT_ASSERTION)


@main.command()
@click.argument("ledger_path")
@click.option("--keys", default=None, envvar="TCASH_KEYS", help="Bank key registry JSON.")
@_profile_option
@_server_option
def audit(ledger_path, keys, profile, server):
    """Re-verify a ledger file from its raw bytes alone."""
    data = _read_bytes(ledger_path)
    body = _post(
        server,
        "/audit",
        {
            "ledger_b64": base64.b64encode(data).decode(),
            "profile": profile,
            "keys_json": _load_keys(keys, ledger_path),
        },
    )
    click.echo(body["report"], nl=False)
    sys.exit(EXIT_OK if body["status"] == "ok" else EXIT_VIOLATION)


@main.command()
@click.argument("ledger_path")
@click.option("--sn", required=True, help="Coin serial number (hex).")
@click.option("--val", required=True, type=int, help="Denomination in cents.")
@click.option("--bank", required=True, help="Minting bank id (hex).")
@click.option("--keys", default=None, envvar="TCASH_KEYS", help="Bank key registry JSON.")
@_profile_option
@_server_option
def inspect(ledger_path, sn, val, bank, keys, profile, server):
    """Print one coin's transaction chain with per-hop verification."""
    data = _read_bytes(ledger_path)
    body = _post(
        server,
        "/inspect",
        {
            "ledger_b64": base64.b64encode(data).decode(),
            "sn": sn,
            "val": val,
            "bank": bank,
            "profile": profile,
            "keys_json": _load_keys(keys, ledger_path),
        },
    )
    click.echo(body["report"], nl=False)
    sys.exit(EXIT_OK if body["status"] == "ok" else EXIT_VIOLATION)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run(service_app, host=host, port=port)


if __name__ == "__main__":
    main()
