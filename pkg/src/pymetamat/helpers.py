from dotenv import dotenv_values, find_dotenv
import logging
import os
import sys
from typing import Any, Dict, Iterable, List, Optional, Set, TextIO

from pymetamat.exceptions import ConfigError

ENV_PREFIX = "PYMETAMAT_"


def check_known_keys(config: Dict[str, Any], known_keys: Iterable[str]) -> None:
    """Ensure every key of a loaded configuration maps to a known option.

    Args:
        config (Dict[str, Any]): the combined configuration, keys already normalised
        known_keys (Iterable[str]): the option names the caller understands

    Raises:
        ConfigError: if one or more keys are not recognised
    """

    unknown: Set[str] = set(config.keys()) - set(known_keys)

    if unknown:
        raise ConfigError(f'unknown configuration keys: {", ".join(sorted(unknown))}')


def normalise_key(key: str) -> str:
    return key.strip().lower().replace("-", "_")


def combine_configs(
    config_file: Optional[str] = None,
    load_env_vars: bool = True,
    load_dotenv: bool = False,
    prefix: str = ENV_PREFIX,
) -> Dict[str, str]:
    """Merge a flat key=value config file with prefixed environment variables.

    The file is read with python-dotenv, so comments, quoting and `export`
    prefixes behave as in a `.env` file. Environment variables win over the
    file; command-line flags (applied by the caller) win over both.

    Args:
        config_file (Optional[str]): path to a key=value file
        load_env_vars (bool): pick up `PYMETAMAT_*` variables from the process environment
        load_dotenv (bool): also read the nearest `.env` file (its `PYMETAMAT_*` entries)
        prefix (str): environment prefix to strip

    Returns:
        Dict[str, str]: option name -> raw string value
    """

    combined: Dict[str, str] = {}

    if load_dotenv:
        found = find_dotenv(usecwd=True)
        if found:
            for key, value in dotenv_values(found).items():
                if key.startswith(prefix) and value is not None:
                    combined[normalise_key(key[len(prefix):])] = value

    if config_file:
        if not os.path.isfile(config_file):
            raise ConfigError(f"config file not found: {config_file}")
        for key, value in dotenv_values(config_file).items():
            if value is None:
                raise ConfigError(f"config key '{key}' has no value")
            combined[normalise_key(key)] = value

    if load_env_vars:
        for key, value in os.environ.items():
            if key.startswith(prefix):
                combined[normalise_key(key[len(prefix):])] = value

    return combined


def parse_int_list(text: str) -> List[int]:
    """Parse a list of positive integers such as "1,2,3,4" or "1-4".

    Args:
        text (str): comma separated integers and inclusive ranges

    Returns:
        List[int]: the integers in ascending order, without duplicates

    Raises:
        ConfigError: on empty input, malformed items or non-positive values
    """
    values: Set[int] = set()
    for item in (part.strip() for part in text.split(",")):
        if not item:
            continue
        try:
            if "-" in item:
                lo_text, hi_text = item.split("-", 1)
                lo, hi = int(lo_text), int(hi_text)
                if hi < lo:
                    raise ConfigError(f"descending range '{item}'")
                values.update(range(lo, hi + 1))
            else:
                values.add(int(item))
        except ValueError as exc:
            raise ConfigError(f"not an integer list: '{text}'") from exc

    if not values:
        raise ConfigError("empty integer list")
    if min(values) < 1:
        raise ConfigError(f"integer list must be positive: '{text}'")
    return sorted(values)


def setup_logger(
    name: str = __name__,
    level: int = logging.INFO,
    log_file: Optional[str] = None,
    stream: Optional[TextIO] = sys.stderr,
) -> logging.Logger:
    """
    Configures and returns a logger with optional StreamHandler and/or FileHandler.

    This function checks if a logger with the specified name already has any StreamHandler
    or FileHandler attached, and if not, it adds them according to the parameters. Data
    files are written to stdout by the CLI, so the stream defaults to stderr.

    Args:
        name (str): The name of the logger to configure.
        level (int): The logging level to set for the logger. Defaults to logging.INFO.
        log_file (Optional[str]): If provided, logs will be written to this file.
        stream (Optional[TextIO]): Stream for the StreamHandler, or None for no stream output.

    Returns:
        logging.Logger: A configured logger instance.
    """
    logger: logging.Logger = logging.getLogger(name)

    logger.setLevel(level)

    formatter = logging.Formatter(
        '[%(asctime)s]\t%(levelname)s\t%(name)s:%(lineno)d\t%(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    # FileHandler subclasses StreamHandler, so exclude it when looking for a stream handler
    has_stream = any(
        isinstance(h, logging.StreamHandler) and not isinstance(h, logging.FileHandler)
        for h in logger.handlers
    )
    if stream is not None and not has_stream:
        stream_handler = logging.StreamHandler(stream)
        stream_handler.setFormatter(formatter)
        logger.addHandler(stream_handler)

    if log_file and not any(isinstance(h, logging.FileHandler) for h in logger.handlers):
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    logger.propagate = False
    return logger
