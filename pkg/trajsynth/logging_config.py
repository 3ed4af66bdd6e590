# trajsynth/logging_config.py
import logging
from logging.handlers import RotatingFileHandler
import os
from typing import Optional

from . import get_settings

PACKAGE_LOGGER = 'trajsynth'


def setup_logging(level: Optional[str] = None, log_dir: Optional[str] = None) -> logging.Logger:
    settings = get_settings()
    log_level = (level or settings['LOG_LEVEL']).upper()
    log_dir = log_dir or settings['LOG_DIR']

    logger = logging.getLogger(PACKAGE_LOGGER)
    logger.setLevel(log_level)

    # Handlers are attached once per process
    if getattr(logger, '_trajsynth_configured', False):
        for handler in logger.handlers:
            handler.setLevel(log_level)
        return logger

    # Create logs directory if it doesn't exist
    if not os.path.exists(log_dir):
        os.makedirs(log_dir)

    # File handler
    file_handler = RotatingFileHandler(
        os.path.join(log_dir, 'trajsynth.log'),
        maxBytes=1024 * 1024 * 10,  # 10MB
        backupCount=10
    )
    file_handler.setFormatter(logging.Formatter(
        '%(asctime)s %(levelname)s: %(message)s [in %(pathname)s:%(lineno)d]'
    ))
    file_handler.setLevel(log_level)

    # Console handler
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    ))
    console_handler.setLevel(log_level)

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)
    logger.propagate = False
    logger._trajsynth_configured = True
    return logger
