from flask import Flask
from config import config
import logging
import os


def create_app(config_name='default'):
    app = Flask(__name__)
    app.config.from_object(config[config_name])

    logging.basicConfig(
        level=app.config['LOG_LEVEL'],
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )

    # Ensure output folder exists
    os.makedirs(app.config['OUTPUT_DIR'], exist_ok=True)

    # Register command blueprints
    from app.commands import simulate, estimate, sweep, report
    app.register_blueprint(simulate.bp)
    app.register_blueprint(estimate.bp)
    app.register_blueprint(sweep.bp)
    app.register_blueprint(report.bp)

    return app
