"""`uvgpt-worker serve`: run one worker process on a port."""

from __future__ import annotations

import click

from .service import WeightsUnavailable, build_app


@click.group()
def cli():
    """Reference worker for the uvgpt wire protocol."""


@cli.command()
@click.option(
    "--model",
    "model_kind",
    type=click.Choice(["stub", "detect", "segment"]),
    default="stub",
    show_default=True,
    help="stub answers from fixtures; detect/segment wrap real models.",
)
@click.option("--port", type=int, default=8151, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option(
    "--fixtures",
    type=click.Path(exists=True, file_okay=False),
    default=".",
    show_default=True,
    help="Directory holding <stem>.truth.json files (stub mode).",
)
@click.option("--name", default=None, help="Worker name advertised to the registry.")
@click.option("--latency-cost", type=float, default=1.0, show_default=True)
@click.option("--reliability", type=float, default=0.99, show_default=True)
@click.option("--weights", default=None, help="Model weights path (real modes).")
def serve(model_kind, port, host, fixtures, name, latency_cost, reliability, weights):
    """Serve /v1/capabilities, /v1/detect, /v1/segment."""
    import uvicorn

    app = build_app(
        model_kind=model_kind,
        fixtures=fixtures,
        name=name,
        latency_cost=latency_cost,
        reliability=reliability,
        weights=weights,
    )
    uvicorn.run(app, host=host, port=port)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except WeightsUnavailable as exc:
        click.echo(f"startup failed: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
