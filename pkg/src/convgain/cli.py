"""Command-line entry point: one subcommand per pipeline stage."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .config import ConfigError, load_config
from .gateway import GatewayConfigError, GatewayProviderError, GatewayResponseError
from .pipeline import MissingArtifactError, run_pipeline
from .segmentation import SegmentationError
from .transcripts import TranscriptError

EXIT_CONFIG = 2
EXIT_PROVIDER = 3
EXIT_VALIDATION = 4


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _run(ctx: click.Context, stages: tuple[str, ...]) -> None:
    opts = ctx.obj
    try:
        config = load_config(
            opts["config"],
            out_dir=opts["out"],
            seed=opts["seed"],
            conditions=opts["conditions"],
            providers=opts["providers"],
            cache_policy=opts["cache"],
        )
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    try:
        run_pipeline(config, stages)
    except (ConfigError, GatewayConfigError, MissingArtifactError) as exc:
        _fail(EXIT_CONFIG, str(exc))
    except GatewayProviderError as exc:
        _fail(EXIT_PROVIDER, str(exc))
    except (GatewayResponseError, TranscriptError, SegmentationError) as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except ValueError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    click.echo(f"{'+'.join(stages)}: done ({config.out_dir})")


@click.group()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              help="YAML run configuration.")
@click.option("--out", type=click.Path(path_type=Path), default=None,
              help="Output directory (overrides the config file).")
@click.option("--seed", type=int, default=None, help="Random seed override.")
@click.option("--providers", default=None,
              help="Provider overrides, e.g. 'chat=mock,logprob=none'.")
@click.option("--conditions", default=None,
              help="Comma-separated context conditions to rate under.")
@click.option("--cache", type=click.Choice(["use", "refresh", "off"]), default=None,
              help="Prompt cache policy.")
@click.pass_context
def main(ctx, config_path, out, seed, providers, conditions, cache):
    """Dialogue informativeness pipeline over line-delimited episode files."""
    ctx.ensure_object(dict)
    ctx.obj.update(
        config=config_path,
        out=out,
        seed=seed,
        providers=providers,
        conditions=tuple(conditions.split(",")) if conditions else None,
        cache=cache,
    )


def _stage_command(name: str, stages: tuple[str, ...], help_text: str):
    @main.command(name=name, help=help_text)
    @click.pass_context
    def _cmd(ctx):
        _run(ctx, stages)

    return _cmd


_stage_command("preprocess", ("preprocess",), "Load episodes and apply skip rules.")
_stage_command("segment", ("segment",), "Propose, vote, and merge subtopic segments.")
_stage_command("consolidate", ("consolidate",), "Build the semantic memory store.")
_stage_command("summarise", ("summarise",), "Summarise memory for selected segments.")
_stage_command("rate", ("rate",), "Rate segments under each context condition.")
_stage_command("features", ("features",), "Compute per-utterance proxy features.")
_stage_command("stats", ("stats",), "Compute agreement, correlation, and model stats.")
_stage_command("report", ("report",), "Render CSV report tables from the stats.")


@main.command(name="run", help="Run every stage in order.")
@click.pass_context
def run_all(ctx):
    from .pipeline import STAGES

    _run(ctx, STAGES)


@main.command(name="serve-annotation", help="Serve the annotation HTTP API.")
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.pass_context
def serve_annotation(ctx, host, port):
    import uvicorn

    from .service import AnnotationService, create_app

    app = create_app(AnnotationService())
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
