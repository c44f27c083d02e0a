from flask.cli import FlaskGroup
from app import create_app
import os


def make_app():
    return create_app(os.getenv('SQUINT_PROFILE', 'default'))


cli = FlaskGroup(create_app=make_app, add_default_commands=False,
                 help='Beam-squint channel simulation and estimation.')

if __name__ == '__main__':
    cli()
