"""
Logging setup shared by the CLI and long-running jobs
"""
import logging
from pathlib import Path
from typing import Dict, Optional


def setup_logging(config: Dict, level: Optional[str] = None) -> None:
    """Configure the root logger from a LOGGING_CONFIG style dict"""
    handlers = [logging.StreamHandler()]
    log_file = config.get("FILE")
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=(level or config.get("LEVEL", "INFO")).upper(),
        format=config.get("FORMAT"),
        handlers=handlers,
        force=True,
    )
