"""Command-line blueprints"""
from functools import wraps

import click

from app.errors import SquintError


def fail(message):
    """Print a failure line and exit non-zero"""
    click.echo(f"✗ {message}", err=True)
    raise SystemExit(1)


def guarded(func):
    """Turn package errors into a ✗ line instead of a traceback"""
    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (SquintError, OSError) as exc:
            fail(str(exc))
    return wrapper


config_option = click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
                             help='TOML file of UPPER_CASE keys overlaid on the profile.')
