"""HTTP surface: the generalized prompt API and the specific label API.

POST /v1/process  {"prompt", "images": [{"name", "b64"|"path"}], "options"?}
POST /v1/label    {"object_name", "image_location"}

Validation failures are 400, selection with no usable workers is 503, and
execution failures are 422 with the full attempt trace in the body.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import os
from pathlib import Path

from fastapi import Body, FastAPI
from fastapi.responses import JSONResponse

from .config import (
    PORT_ENV_VAR,
    REGISTRY_ENV_VAR,
    WORKERS_ENV_VAR,
    Settings,
    load_settings,
)
from .engine import LoadedImage
from .errors import (
    ExecutionError,
    Infeasible,
    NoCapableModel,
    ParseError,
    PlanError,
    RasterError,
)
from .pipeline import (
    Orchestrator,
    PipelineResult,
    default_mock_registry,
    load_endpoints,
    load_image_bytes,
    load_image_file,
    write_outputs,
)
from .registry import Registry, load_registry
from .workers import (
    HttpWorkerBackend,
    TruthStore,
    check_capabilities,
    faulty_names_from_env,
    mock_backends,
)

FIXTURES_ENV_VAR = "UVGPT_FIXTURES"
OUTPUT_ENV_VAR = "UVGPT_OUTPUT"


class GatewayError(Exception):
    def __init__(self, status: int, kind: str, detail: str, trace=None):
        super().__init__(detail)
        self.status = status
        self.kind = kind
        self.detail = detail
        self.trace = trace

    def response(self) -> JSONResponse:
        body: dict = {"error": self.kind, "detail": self.detail}
        if self.trace is not None:
            body["trace"] = {
                "settings": self.trace.settings,
                "steps": [s.to_dict() for s in self.trace.steps],
            }
        return JSONResponse(status_code=self.status, content=body)


def _bad_request(detail: str) -> GatewayError:
    return GatewayError(400, "BadRequest", detail)


def _load_request_images(entries) -> list[LoadedImage]:
    if not isinstance(entries, list) or not entries:
        raise _bad_request("at least one image is required")
    images: list[LoadedImage] = []
    for entry in entries:
        if not isinstance(entry, dict):
            raise _bad_request("images must be objects with name and b64/path")
        name = entry.get("name") or Path(entry.get("path", "")).name
        if not name:
            raise _bad_request("image entry lacks a name")
        try:
            if entry.get("b64"):
                data = base64.b64decode(entry["b64"], validate=True)
                images.append(load_image_bytes(name, data))
            elif entry.get("path"):
                images.append(load_image_file(entry["path"]))
            else:
                raise _bad_request(f"image {name!r} has neither b64 nor path")
        except FileNotFoundError:
            raise _bad_request(f"image file not found: {entry.get('path')}")
        except (binascii.Error, ValueError):
            raise _bad_request(f"image {name!r}: invalid base64 payload")
        except RasterError as exc:
            raise _bad_request(f"image {name!r}: {exc}")
    return images


def create_app(orchestrator: Orchestrator, output_dir: str | Path) -> FastAPI:
    app = FastAPI(title="uvgpt gateway")
    output_dir = Path(output_dir)

    def no_workers() -> JSONResponse | None:
        if len(orchestrator.registry) == 0 or not orchestrator.backends:
            return GatewayError(
                503, "NoWorkers", "no registered model workers"
            ).response()
        return None

    def run_and_respond(run, dump_plan: bool, inline: bool) -> JSONResponse:
        try:
            result: PipelineResult = run()
        except ParseError as exc:
            return _bad_request(str(exc)).response()
        except PlanError as exc:
            return _bad_request(str(exc)).response()
        except (NoCapableModel, Infeasible) as exc:
            return GatewayError(503, "NoWorkers", str(exc)).response()
        except ExecutionError as exc:
            return GatewayError(
                422, type(exc).__name__, str(exc), trace=exc.trace
            ).response()

        request_dir = output_dir / _digest(result)
        manifest = write_outputs(result, request_dir, inline=inline)
        trace_path = request_dir / "trace.jsonl"
        trace_path.write_text(result.trace.to_jsonl(), encoding="utf-8")
        manifest["trace"] = str(trace_path)
        if dump_plan:
            manifest["plan"] = result.plan.to_dict()
        return JSONResponse(status_code=200, content=manifest)

    @app.post("/v1/process")
    def process(body: dict = Body(...)):
        unavailable = no_workers()
        if unavailable is not None:
            return unavailable
        try:
            prompt = body.get("prompt", "")
            if not isinstance(prompt, str) or not prompt.strip():
                raise _bad_request("prompt must be a non-empty string")
            images = _load_request_images(body.get("images"))
        except GatewayError as exc:
            return exc.response()
        options = body.get("options") or {}
        return run_and_respond(
            lambda: orchestrator.process(
                prompt,
                images,
                integrate=options.get("integrate"),
                conf_threshold=options.get("conf_threshold"),
            ),
            dump_plan=bool(options.get("dump_plan")),
            inline=bool(options.get("inline")),
        )

    @app.post("/v1/label")
    def label(body: dict = Body(...)):
        unavailable = no_workers()
        if unavailable is not None:
            return unavailable
        try:
            object_name = body.get("object_name", "")
            location = body.get("image_location", "")
            if not isinstance(object_name, str) or not object_name.strip():
                raise _bad_request("object_name must be a non-empty string")
            if not isinstance(location, str) or not location.strip():
                raise _bad_request("image_location must be a non-empty string")
            images = _load_request_images([{"path": location}])
        except GatewayError as exc:
            return exc.response()
        return run_and_respond(
            lambda: orchestrator.label(object_name.strip(), images[0]),
            dump_plan=False,
            inline=False,
        )

    return app


def _digest(result: PipelineResult) -> str:
    """Deterministic per-request output folder: hash of prompt + image ids."""
    seed = result.plan.source.raw + "|" + "|".join(
        im.image.id for im in result.scene.images
    )
    return hashlib.sha256(seed.encode("utf-8")).hexdigest()[:12]


# ---------------------------------------------------------------------------
# environment wiring


def build_orchestrator_from_env(
    environ=None,
    extra_fixture_dirs: list[Path] | None = None,
    settings: Settings | None = None,
) -> Orchestrator:
    """Registry from UVGPT_REGISTRY (or built-in mocks); backends from
    UVGPT_WORKERS endpoints (or fixture-driven in-process mocks)."""
    env = environ if environ is not None else os.environ
    settings = settings or load_settings(environ=env)

    registry_path = env.get(REGISTRY_ENV_VAR)
    registry: Registry = (
        load_registry(registry_path) if registry_path else default_mock_registry()
    )

    workers_path = env.get(WORKERS_ENV_VAR)
    if workers_path:
        backends = {}
        for endpoint in load_endpoints(workers_path):
            backend = HttpWorkerBackend(endpoint)
            check_capabilities(backend, registry.get(endpoint.name))
            backends[endpoint.name] = backend
    else:
        fixture_dirs = [Path(env.get(FIXTURES_ENV_VAR, "."))]
        fixture_dirs.extend(extra_fixture_dirs or [])
        truth = TruthStore(directory=fixture_dirs)
        backends = mock_backends(registry, truth, faulty=faulty_names_from_env(env))
    return Orchestrator(registry, backends, settings=settings)


def serve(host: str = "127.0.0.1", port: int | None = None, output_dir=None) -> None:
    import uvicorn

    if port is None:
        port = int(os.environ.get(PORT_ENV_VAR, "8000"))
    output_dir = Path(output_dir or os.environ.get(OUTPUT_ENV_VAR, "uvgpt-output"))
    app = create_app(build_orchestrator_from_env(), output_dir)
    uvicorn.run(app, host=host, port=port)
