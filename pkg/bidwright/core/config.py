import json
import os
from dataclasses import MISSING, fields

import yaml

APP_NAME = 'Bidwright'

# Constants
LOGGER_NAME = 'bidwright'
LOG_FILE_NAME = f'{LOGGER_NAME}.log'
CONFIG_DIR_ENV = 'BIDWRIGHT_CONFIG_DIR'
LOG_DIR_ENV = 'BIDWRIGHT_LOG_DIR'
LOG_LEVEL_ENV = 'BIDWRIGHT_LOG_LEVEL'
DEFAULT_LOG_LEVEL = 'INFO'

HOURS_PER_DAY = 24
DEFAULT_STEPS_PER_DAY = 24
DEFAULT_TEST_DAYS = 3
DEFAULT_FRACTIONS = ('1/2', '1/8', '1/32')

DEFAULT_HASH_BITS = 20
DEFAULT_MEMORY_WINDOW = 6
DEFAULT_RETRIES = 2


def parse_document(text):
    """
    Decode a configuration document: JSON first, YAML when the text is not JSON.

    YAML 1.1 reads JSON numbers such as ``1e-06`` as strings and rejects tab indentation.

    :raises yaml.YAMLError: When the text is neither.
    """
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return yaml.safe_load(text)


def coerce_numeric(cls, data):
    """
    Convert the values of a dataclass's int and float fields to their declared type.

    :param type cls: Dataclass whose numeric fields have plain defaults.
    :param dict data: Document values by field name; unknown names pass through.
    :raises ValueError: On a value that is not a number, or a fractional value for an int field.
    """
    defaults = {f.name: f.default for f in fields(cls) if f.default is not MISSING}
    converted = dict(data)
    for name, value in data.items():
        default = defaults.get(name)
        if isinstance(default, bool) or not isinstance(default, (int, float)):
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise ValueError(f"{name} must be a number, got {value!r}")
        if isinstance(default, int):
            if isinstance(value, int):
                continue
            number = float(value)
            if not number.is_integer():
                raise ValueError(f"{name} must be an integer, got {value!r}")
            converted[name] = int(number)
        else:
            converted[name] = float(value)
    return converted


class Config:
    """
    Application-level settings shared by every component: where logs go and how verbose they are.

    Values are layered the same way for every key: built-in defaults, then the optional YAML file
    ``<config_dir>/config.yaml``, then environment variables. Experiment settings do not live here,
    they belong to :class:`bidwright.harness.settings.RunConfig`.
    """

    _instance = None

    def __init__(self, app_name=APP_NAME):
        self.app_name = app_name
        self.LOG_FILE_NAME = LOG_FILE_NAME
        self.LOGGER_NAME = LOGGER_NAME
        self._initialize_configuration()

    @classmethod
    def get_instance(cls):
        if cls._instance is None:
            cls._instance = cls()
        return cls._instance

    def _initialize_configuration(self):
        """
        Combine defaults, the YAML app file and environment overrides into attributes on this object.
        """
        config_dir = os.environ.get(CONFIG_DIR_ENV) or os.path.join(os.path.expanduser('~'), '.bidwright')

        config = {
            'config_dir': config_dir,
            'log_dir': None,
            'log_level': DEFAULT_LOG_LEVEL,
        }

        config_file = os.path.join(config_dir, 'config.yaml')
        if os.path.isfile(config_file):
            file_config = self._read_config_file(config_file)
            config.update({k: v for k, v in file_config.items() if v is not None})

        if os.environ.get(LOG_DIR_ENV):
            config['log_dir'] = os.environ[LOG_DIR_ENV]
        if os.environ.get(LOG_LEVEL_ENV):
            config['log_level'] = os.environ[LOG_LEVEL_ENV]

        for key, value in config.items():
            setattr(self, key, value)
        return config

    @staticmethod
    def _read_config_file(path):
        with open(path, 'r', encoding='utf-8') as f:
            loaded = parse_document(f.read())
        return loaded if isinstance(loaded, dict) else {}

    def override(self, **values):
        """
        Replace settings for the rest of the process (used by CLI flags).

        :param values: Setting names and their new values. ``None`` values are ignored.
        """
        for key, value in values.items():
            if value is not None:
                setattr(self, key, value)


config = Config.get_instance()
