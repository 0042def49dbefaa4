"""Command-line front end: a thin client over the navigation service.

Every command builds a service request, sends it to the in-process handlers
(default) or to a remote server (``--server http://host:port``), and writes
the response payloads to files. No command mutates its inputs; outputs are
written atomically (temp file + rename). The output directory resolves as
``--out-dir`` > ``$POLARNAV_OUT_DIR`` > current directory.

Exit codes: 0 success; 2 configuration/validation error; 3 bad image
dimensions; 4 degenerate polarization geometry; 5 other domain error;
1 unexpected failure.
"""

from __future__ import annotations

import base64
import os
import sys
import tempfile
from pathlib import Path

import click

from . import config as cfgmod
from . import errors as err
from .service import handlers
from .service.models import (
    BatchRequest,
    ExtractRequest,
    RunRequest,
    SynthRequest,
    ValidateRequest,
)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_BAD_DIMENSIONS = 3
EXIT_DEGENERATE = 4
EXIT_DOMAIN = 5

_ERROR_EXIT_CODES = {
    "ConfigError": EXIT_CONFIG,
    "BadDimensions": EXIT_BAD_DIMENSIONS,
    "DegenerateGeometry": EXIT_DEGENERATE,
}


def _exit_code_for(name: str) -> int:
    return _ERROR_EXIT_CODES.get(name, EXIT_DOMAIN)


class ServiceClient:
    """Dispatches requests in process or over HTTP."""

    _OPS = {
        "extract": (handlers.handle_extract, "/v1/extract"),
        "run": (handlers.handle_run, "/v1/run"),
        "batch": (handlers.handle_batch, "/v1/batch"),
        "synth": (handlers.handle_synth, "/v1/synth"),
        "validate": (handlers.handle_validate, "/v1/validate"),
    }

    def __init__(self, server: str | None):
        self.server = server.rstrip("/") if server else None

    def call(self, op: str, request):
        handler, path = self._OPS[op]
        if self.server is None:
            return handler(request)
        import httpx
        resp = httpx.post(self.server + path, json=request.model_dump(),
                          timeout=600.0)
        if resp.status_code in (400, 422):
            body = resp.json()
            name = body.get("error", "PolarNavError")
            exc_cls = getattr(err, name, err.PolarNavError)
            raise exc_cls(body.get("detail", resp.text))
        resp.raise_for_status()
        return resp.json()


def _payload(result, field: str):
    # in-process calls return pydantic models; HTTP calls return dicts
    if isinstance(result, dict):
        return result[field]
    return getattr(result, field)


def _out_dir(option_value: str | None) -> Path:
    if option_value:
        return Path(option_value)
    env = os.environ.get("POLARNAV_OUT_DIR")
    return Path(env) if env else Path.cwd()


def _write_atomic(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _fail(exc: err.PolarNavError) -> None:
    click.echo(f"error ({type(exc).__name__}): {exc}", err=True)
    sys.exit(_exit_code_for(type(exc).__name__))


def _validate_or_exit(client: ServiceClient, kind: str, text: str) -> None:
    result = client.call("validate", ValidateRequest(kind=kind, config=text))
    if not _payload(result, "valid"):
        click.echo(f"invalid {kind} config: {_payload(result, 'error')}",
                   err=True)
        sys.exit(EXIT_CONFIG)
    click.echo(f"{kind} config OK")
    sys.exit(EXIT_OK)


@click.group()
@click.version_option()
def main() -> None:
    """Polarized-skylight integrated navigation tools."""


@main.command()
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="camera config file")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="also write the report to this file")
@click.option("--debug-csv", "debug_csv_path", type=click.Path(), default=None,
              help="write per-superpixel polarization CSV")
@click.option("--server", default=None, help="remote service URL")
@click.option("--validate-only", is_flag=True,
              help="check the config and exit")
def extract(image, config_path, out_path, debug_csv_path, server,
            validate_only):
    """Recover the bi-directional solar vector from a PGM mosaic IMAGE."""
    client = ServiceClient(server)
    config_text = Path(config_path).read_text()
    if validate_only:
        _validate_or_exit(client, "camera", config_text)
    try:
        req = ExtractRequest(
            image_b64=base64.b64encode(Path(image).read_bytes()).decode("ascii"),
            camera_config=config_text,
            include_debug_csv=debug_csv_path is not None)
        result = client.call("extract", req)
    except err.PolarNavError as exc:
        _fail(exc)
    vec = _payload(result, "vector")
    report = (
        f"vector_x = {vec[0]!r}\n"
        f"vector_y = {vec[1]!r}\n"
        f"vector_z = {vec[2]!r}\n"
        f"min_eigenvalue = {_payload(result, 'min_eigenvalue')!r}\n"
        f"eigen_gap = {_payload(result, 'eigen_gap')!r}\n"
        f"sample_count = {_payload(result, 'sample_count')}\n"
        f"used_samples = {_payload(result, 'used_samples')}\n"
        f"total_superpixels = {_payload(result, 'total_superpixels')}\n")
    click.echo(report, nl=False)
    if out_path:
        _write_atomic(Path(out_path), report)
    if debug_csv_path:
        _write_atomic(Path(debug_csv_path), _payload(result, "debug_csv"))


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="override [run] seed")
@click.option("--out-dir", default=None)
@click.option("--server", default=None)
@click.option("--validate-only", is_flag=True)
def run(config_path, seed, out_dir, server, validate_only):
    """Run one fused navigation scenario; write CSV and summary."""
    client = ServiceClient(server)
    config_text = Path(config_path).read_text()
    if validate_only:
        _validate_or_exit(client, "scenario", config_text)
    try:
        prefix = cfgmod.build_scenario(config_text).out_prefix
        result = client.call("run", RunRequest(config=config_text, seed=seed))
    except err.PolarNavError as exc:
        _fail(exc)
    out = _out_dir(out_dir)
    csv_path = out / f"{prefix}.csv"
    summary_path = out / f"{prefix}_summary.txt"
    _write_atomic(csv_path, _payload(result, "csv"))
    _write_atomic(summary_path, _payload(result, "summary"))
    click.echo(f"wrote {csv_path} and {summary_path}")


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seeds", "n_seeds", type=int, required=True,
              help="number of Monte-Carlo seeds")
@click.option("--seed", "base_seed", type=int, default=None,
              help="first seed (default: [run] seed)")
@click.option("--out-dir", default=None)
@click.option("--server", default=None)
@click.option("--validate-only", is_flag=True)
def batch(config_path, n_seeds, base_seed, out_dir, server, validate_only):
    """Run a Monte-Carlo batch; write per-seed stats + aggregate block."""
    client = ServiceClient(server)
    config_text = Path(config_path).read_text()
    if validate_only:
        _validate_or_exit(client, "scenario", config_text)
    try:
        prefix = cfgmod.build_scenario(config_text).out_prefix
        result = client.call("batch", BatchRequest(
            config=config_text, n_seeds=n_seeds, base_seed=base_seed))
    except err.PolarNavError as exc:
        _fail(exc)
    out = _out_dir(out_dir)
    stats_path = out / f"{prefix}_batch.csv"
    _write_atomic(stats_path, _payload(result, "stats"))
    click.echo(f"wrote {stats_path}")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve(host, port):
    """Start the navigation service (requires uvicorn)."""
    try:
        import uvicorn
    except ImportError:
        click.echo("uvicorn is not installed; pip install 'polarnav[server]'",
                   err=True)
        sys.exit(EXIT_UNEXPECTED)
    from .service.app import app
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="override [scene] seed")
@click.option("--out-name", default="sky", help="output file stem")
@click.option("--out-dir", default=None)
@click.option("--server", default=None)
@click.option("--validate-only", is_flag=True)
def synth(config_path, seed, out_name, out_dir, server, validate_only):
    """Render a synthetic sky mosaic plus its truth sidecar."""
    client = ServiceClient(server)
    config_text = Path(config_path).read_text()
    if validate_only:
        _validate_or_exit(client, "scene", config_text)
    try:
        result = client.call("synth", SynthRequest(config=config_text,
                                                   seed=seed))
    except err.PolarNavError as exc:
        _fail(exc)
    out = _out_dir(out_dir)
    pgm_path = out / f"{out_name}.pgm"
    truth_path = out / f"{out_name}.truth.txt"
    _write_atomic(pgm_path, base64.b64decode(_payload(result, "pgm_b64")))
    _write_atomic(truth_path, _payload(result, "truth"))
    click.echo(f"wrote {pgm_path} and {truth_path}")


if __name__ == "__main__":
    main()
