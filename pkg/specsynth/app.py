import os

from adsputils import load_config, setup_logging

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib


proj_home = os.path.realpath(os.path.join(os.path.dirname(__file__), '../'))

_loggers = {}
_config = {}


def get_config():
    """configuration from config.py, local_config.py and the environment, loaded once"""
    if not _config:
        _config.update(load_config(proj_home=proj_home))
    return _config


def get_logger(name='specsynth'):
    if name not in _loggers:
        _loggers[name] = setup_logging(name, get_config().get('LOGGING_LEVEL', 'INFO'))
    return _loggers[name]


class SynthApp(object):
    """configuration and logger for one pipeline process

    values come from config.py (via adsputils), then an optional toml run
    file, then command line flags; overrides land in the shared process
    configuration and are also kept apart so the run manifest can record them
    """

    def __init__(self, app_name='specsynth'):
        self.app_name = app_name
        self.proj_home = proj_home
        self.conf = get_config()
        self.overrides = {}
        self.logger = get_logger(app_name)

    def load_toml(self, path):
        with open(path, 'rb') as f:
            values = tomllib.load(f)
        self.override(**{k.upper(): v for k, v in values.items()})
        self.logger.info('app.py, loaded run configuration {}'.format(path))

    def override(self, **values):
        for key, value in values.items():
            if value is None:
                continue
            self.conf[key] = value
            self.overrides[key] = value
