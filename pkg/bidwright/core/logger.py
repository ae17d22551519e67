import inspect
import logging
import os

from colorama import Fore, Style, just_fix_windows_console

from bidwright.core import config as config_module
from bidwright.core.config import config

just_fix_windows_console()

LEVEL_COLOURS = {
    logging.DEBUG: Fore.CYAN,
    logging.INFO: Fore.GREEN,
    logging.WARNING: Fore.YELLOW,
    logging.ERROR: Fore.RED,
    logging.CRITICAL: Fore.MAGENTA,
}

FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class ColouredFormatter(logging.Formatter):
    def format(self, record):
        message = super().format(record)
        colour = LEVEL_COLOURS.get(record.levelno)
        return f"{colour}{message}{Style.RESET_ALL}" if colour else message


def get_dynamic_logger(depth=1):
    """
    Retrieve a logger named after the calling module, configuring the shared root handlers on first use.

    :param int depth: How many frames up the caller sits.
    :return: A logger instance for the calling module.
    :rtype: logging.Logger
    """
    frame = inspect.currentframe()
    for _ in range(depth):
        frame = frame.f_back if frame is not None else None
    module_name = frame.f_globals.get('__name__', '__main__') if frame is not None else '__main__'

    root = logging.getLogger(config_module.LOGGER_NAME)
    if not root.handlers:
        configure_logger(root, config.log_dir, config.log_level)

    if not module_name.startswith(config_module.LOGGER_NAME):
        module_name = f"{config_module.LOGGER_NAME}.{module_name}"
    return logging.getLogger(module_name)


def configure_logger(logger, log_dir=None, log_level=None):
    """
    Attach a console handler and, when a log directory is configured, a file handler.

    :param logging.Logger logger: The logger instance to configure.
    :param str log_dir: Directory for ``bidwright.log``. No file is written when None.
    :param str log_level: Level name such as ``INFO``.
    """
    level = getattr(logging, str(log_level or config_module.DEFAULT_LOG_LEVEL).upper(), logging.INFO)
    logger.setLevel(level)
    logger.propagate = False

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(ColouredFormatter(FORMAT))
    console_handler.setLevel(level)
    logger.addHandler(console_handler)

    if log_dir:
        try:
            os.makedirs(log_dir, exist_ok=True)
            file_handler = logging.FileHandler(os.path.join(log_dir, config_module.LOG_FILE_NAME), encoding='utf-8')
        except OSError as e:
            logger.warning(f"[Logger] Could not open log file in {log_dir}: {e}")
        else:
            file_handler.setLevel(level)
            file_handler.setFormatter(logging.Formatter(FORMAT))
            logger.addHandler(file_handler)


def reconfigure(log_dir=None, log_level=None):
    """
    Drop the existing handlers and install new ones, for CLI overrides.
    """
    config.override(log_dir=log_dir, log_level=log_level)
    root = logging.getLogger(config_module.LOGGER_NAME)
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    configure_logger(root, config.log_dir, config.log_level)


def __getattr__(name):
    """
    Dynamically retrieve attributes from the logger of the calling module.

    :param str name: The name of the attribute to retrieve.
    :return: The attribute of the logger.
    """
    dynamic_logger = get_dynamic_logger(depth=2)
    return getattr(dynamic_logger, name)
