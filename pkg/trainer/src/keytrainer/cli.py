"""Command line: train an adapter from a pairs file, serve a saved one."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import click

from .errors import TrainerError
from .model import DEFAULT_BASE_MODEL
from .server import serve
from .training import TrainJob, train


@click.group()
def cli():
    """Train and serve embedding adapters for similarity-pair datasets."""


@cli.command(name="train")
@click.option("--pairs", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--bank", "banks", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--base-model", default=DEFAULT_BASE_MODEL, show_default=True)
@click.option("--epochs", default=4, show_default=True)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--learning-rate", default=0.5, show_default=True)
@click.option("--eval-fraction", default=0.2, show_default=True)
@click.option("--seed", default=0, show_default=True)
def train_command(pairs, banks, out, base_model, epochs, batch_size,
                  learning_rate, eval_fraction, seed):
    """Fit an adapter and print its before/after report as JSON."""
    job = TrainJob(
        pairs_path=Path(pairs),
        bank_paths=tuple(Path(b) for b in banks),
        output_dir=Path(out),
        base_model_id=base_model,
        epochs=epochs,
        batch_size=batch_size,
        learning_rate=learning_rate,
        eval_fraction=eval_fraction,
        seed=seed,
    )
    report = train(job)
    click.echo(json.dumps(report.to_dict(), indent=2))


@cli.command(name="serve")
@click.option("--model-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8675, show_default=True)
def serve_command(model_dir, host, port):
    """Serve /embed, /score, and /health for a saved adapter."""
    serve(Path(model_dir), host=host, port=port)


def main(argv: Sequence[str] | None = None) -> int:
    """Console entry point with single-line machine-parseable errors."""
    try:
        cli.main(args=argv, prog_name="keytrainer", standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        click.echo(f"error: {' '.join(exc.format_message().split())}", err=True)
        return exc.exit_code if exc.exit_code else 1
    except click.Abort:
        click.echo("error: aborted", err=True)
        return 130
    except (TrainerError, OSError) as exc:
        click.echo(f"error: {' '.join(str(exc).split())}", err=True)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
