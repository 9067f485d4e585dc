import os
import logging
from dataclasses import dataclass
from dotenv import load_dotenv

from .errors import ConfigurationError

logger = logging.getLogger(__name__)


@dataclass
class Settings:
    """Process-level settings (paths and parallelism)."""
    output_dir: str
    log_dir: str
    workers: int


def load_settings() -> Settings:
    """
    Load process settings from environment variables.

    A `.env` file in the working directory is honoured. Every invalid
    variable is reported at once.

    Returns:
        Settings instance with validated values

    Raises:
        ConfigurationError: If any variable has an invalid value
    """
    load_dotenv()

    raw_workers = os.getenv("EEG_GAFS_WORKERS", "1")
    problems = []
    workers = 1
    try:
        workers = int(raw_workers)
        if workers < 1:
            problems.append(f"EEG_GAFS_WORKERS must be >= 1 (got {raw_workers})")
    except ValueError:
        problems.append(f"EEG_GAFS_WORKERS is not an integer (got {raw_workers!r})")

    if problems:
        error_msg = f"Invalid environment settings: {', '.join(problems)}"
        logger.error(error_msg)
        raise ConfigurationError(error_msg)

    settings = Settings(
        output_dir=os.getenv("EEG_GAFS_OUTPUT_DIR", "./data/runs"),
        log_dir=os.getenv("EEG_GAFS_LOG_DIR", "./logs"),
        workers=workers,
    )
    logger.debug(f"Settings loaded: {settings}")
    return settings
