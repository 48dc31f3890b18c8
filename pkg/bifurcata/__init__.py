import logging
import os
from dataclasses import replace

from config import config
from bifurcata.models import Settings

__version__ = '0.3.0'

TOOL_NAME = 'bifurcata'

logger = logging.getLogger(__name__)


def create_settings(config_name=None, **overrides) -> Settings:
    """Settings factory pattern"""
    if config_name is None:
        config_name = os.getenv('BIFURCATA_ENV', 'development')

    config_class = config.get(config_name, config['default'])

    # Initialize logging
    config_class.init_logging()
    logging.getLogger(__name__).setLevel(config_class.LOG_LEVEL)

    settings = Settings.from_config(config_class)
    if overrides:
        settings = replace(settings, **overrides)
    logger.debug(f"Settings created from {config_class.__name__}")
    return settings
