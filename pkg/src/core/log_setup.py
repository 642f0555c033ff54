import logging
from typing import Optional

from src.core.config import settings

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

def configure_logging(level: Optional[str] = None) -> None:
    """Install a single stream handler on the root logger"""
    logging.basicConfig(
        level=(level or settings.LOG_LEVEL).upper(),
        format=LOG_FORMAT,
        force=True,
    )
    # asyncio debug chatter
    logging.getLogger("asyncio").setLevel(logging.WARNING)
