"""Command-line entry points.

`uvgpt process` runs the full pipeline on local images, writing annotated
PPMs and result JSON next to the inputs. Exit codes: 0 success, 1 usage
error, 2 execution failure (trace printed to stderr).
"""

from __future__ import annotations

import json
from pathlib import Path

import click

from .config import load_settings
from .errors import UvgptError
from .gateway import build_orchestrator_from_env, serve
from .pipeline import load_image_file, write_outputs


@click.group()
def cli():
    """Vision instruction orchestration over registered model workers."""


@cli.command()
@click.option("--prompt", required=True, help="Natural-language vision instruction.")
@click.option(
    "--integrate/--no-integrate",
    default=None,
    help="Join multi-image output into one image (default: integrate).",
)
@click.option(
    "--trace",
    "trace_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Write the execution trace as JSON lines.",
)
@click.option("--dump-plan", is_flag=True, help="Print the task plan before running.")
@click.option("--conf-threshold", type=float, default=None)
@click.argument("images", nargs=-1, type=click.Path(exists=True, path_type=Path))
def process(prompt, integrate, trace_path, dump_plan, conf_threshold, images):
    """Run PROMPT against one or more image files."""
    if not images:
        raise click.UsageError("at least one image is required")
    settings = load_settings()
    orchestrator = build_orchestrator_from_env(
        extra_fixture_dirs=[p.parent for p in images], settings=settings
    )
    loaded = [load_image_file(p) for p in images]
    task_plan = orchestrator.prepare(prompt, loaded, integrate)
    if dump_plan:
        click.echo(json.dumps(task_plan.to_dict(), indent=2))
    result = orchestrator.execute_plan(task_plan, loaded, conf_threshold)

    out_dirs = {img.ref.id: path.parent for img, path in zip(loaded, images)}
    manifest = write_outputs(result, out_dirs)
    if trace_path is not None:
        trace_path.write_text(result.trace.to_jsonl(), encoding="utf-8")
        click.echo(f"trace: {trace_path}")
    for entry in manifest["results"]:
        annotated = entry.get("annotated", "-")
        click.echo(f"{entry['image']}: {annotated}")
    if "integrated" in manifest:
        click.echo(f"integrated: {manifest['integrated']}")
    for target in result.scene.not_found:
        click.echo(f"not found (conditional): {target}")


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=None, help="Defaults to UVGPT_PORT or 8000.")
@click.option(
    "--output-dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Where annotated outputs and traces are written.",
)
def serve_http(host, port, output_dir):
    """Start the HTTP gateway."""
    serve(host=host, port=port, output_dir=output_dir)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        return 1
    except UvgptError as exc:
        trace = getattr(exc, "trace", None)
        if trace is not None:
            click.echo(trace.to_jsonl(), err=True, nl=False)
        click.echo(f"execution failed: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
