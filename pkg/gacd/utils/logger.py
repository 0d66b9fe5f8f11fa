"""
Simple Logging System with Loguru

Provides clean, colored logging for the library and the experiment runner.
"""

import sys
from pathlib import Path
from typing import Optional

from loguru import logger

from gacd.config.settings import AppConfig


def setup_logger(app_config: Optional[AppConfig] = None) -> None:
    """Setup console (and optional rotating file) logging with Loguru"""
    app_config = app_config or AppConfig()

    # Remove default handler
    logger.remove()

    # Console handler
    logger.add(
        sys.stderr,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}:{function}:{line}</cyan> | {message}",
        level=app_config.log_level,
        colorize=True,
        backtrace=True,
        diagnose=False,
    )

    # File handler if enabled
    if app_config.log_to_file:
        log_path = Path(app_config.log_file_path)
        log_path.parent.mkdir(parents=True, exist_ok=True)

        logger.add(
            log_path,
            format="{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} | {message}",
            level="DEBUG",
            rotation="10 MB",
            retention="30 days",
            compression="zip",
        )

    logger.debug("Logger initialized")


__all__ = ["logger", "setup_logger"]
