import logging
import os
import sys
from datetime import datetime
from pathlib import Path

import psutil

sys.path.append(str(Path(__file__).parent.parent))
from config.config import LOG_PATH, LOG_LEVEL, LOG_FORMAT

# Crea la directory logs se non esiste
os.makedirs(LOG_PATH, exist_ok=True)

# Configura il logger
logger = logging.getLogger('topoclass')
logger.setLevel(getattr(logging, LOG_LEVEL.upper(), logging.INFO))

# Formato del log
formatter = logging.Formatter(LOG_FORMAT)

if not logger.handlers:
    # Handler per file
    log_file = os.path.join(LOG_PATH, f'topoclass_{datetime.now().strftime("%Y%m%d")}.log')
    file_handler = logging.FileHandler(log_file, encoding='utf-8')
    file_handler.setFormatter(formatter)
    logger.addHandler(file_handler)

    # Handler per console
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)


def get_memory_usage() -> str:
    """Memoria residente del processo corrente in MB."""
    process = psutil.Process(os.getpid())
    return f"{process.memory_info().rss / 1024 / 1024:.1f}MB"
