import logging
import os
import sys

import yaml

from .errors import IdPipeError
from .pipeline import PipelineConfig

CONFIG_VERSION = 1


def load_configuration(app_logger: logging.Logger, config_file: str | None = None) -> PipelineConfig:
    """
    Loads the pipeline configuration from a YAML file.

    The file is ``config_file`` when given, else the path in the
    ``IDPIPE_CONFIG_FILE`` environment variable, else ``config.yaml``. A
    missing default file yields the built-in defaults.

    Args:
        app_logger: Logger for configuration errors.
        config_file: Explicit path, as passed with ``--config``.

    Returns:
        The validated PipelineConfig.
    """
    explicit = config_file or os.environ.get("IDPIPE_CONFIG_FILE")
    CONFIG_FILE = explicit or "config.yaml"
    if not explicit and not os.path.exists(CONFIG_FILE):
        return PipelineConfig()
    try:
        with open(CONFIG_FILE, "r") as f:
            config = yaml.safe_load(f)
    except (IOError, yaml.YAMLError) as e:
        app_logger.error(f"Error loading configuration file {CONFIG_FILE}: {e}")
        sys.exit(1)

    if config is None:
        return PipelineConfig()
    if not isinstance(config, dict):
        app_logger.error(f"Invalid configuration in {CONFIG_FILE}: expected a mapping at the top level.")
        sys.exit(1)

    version = config.get("config_ver", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        app_logger.error(
            f"Unsupported config_ver {version} in {CONFIG_FILE}; this version reads {CONFIG_VERSION}."
        )
        sys.exit(1)

    for section in ("layout", "clean", "mser", "mrz", "store"):
        if config.get(section) is not None and not isinstance(config[section], dict):
            app_logger.error(f"Invalid configuration in {CONFIG_FILE}: section '{section}' must be a mapping.")
            sys.exit(1)

    try:
        return PipelineConfig.from_dict(config)
    except IdPipeError as e:
        app_logger.error(f"Invalid configuration in {CONFIG_FILE}: {e}")
        sys.exit(1)
