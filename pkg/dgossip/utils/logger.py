# logger.py - shared by every dgossip module
import inspect
import logging
import os
import sys
from logging.handlers import TimedRotatingFileHandler
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


# ANSI color codes for terminal output
class LogColors:
    GREY = "\033[38;5;240m"
    GREEN = "\033[32m"
    YELLOW = "\033[33m"
    RED = "\033[31m"
    BOLD_RED = "\033[31;1m"
    RESET = "\033[0m"


class ColoredFormatter(logging.Formatter):
    """Custom formatter to add colors based on log level"""

    FORMATS = {
        logging.DEBUG: LogColors.GREY + LOG_FORMAT + LogColors.RESET,
        logging.INFO: LogColors.GREEN + LOG_FORMAT + LogColors.RESET,
        logging.WARNING: LogColors.YELLOW + LOG_FORMAT + LogColors.RESET,
        logging.ERROR: LogColors.RED + LOG_FORMAT + LogColors.RESET,
        logging.CRITICAL: LogColors.BOLD_RED + LOG_FORMAT + LogColors.RESET,
    }

    def format(self, record):
        formatter = logging.Formatter(self.FORMATS.get(record.levelno, LOG_FORMAT))
        return formatter.format(record)


def setup_logger(logger_name: str, log_dir: str | None = None) -> logging.Logger:
    """
    Set up a logger with the following features:
    - Log level from environment variable LOG_LEVEL (default: INFO)
    - Color-coded log levels for console output (stderr, so CSV on stdout stays clean)
    - Daily log rotation at midnight under LOG_DIR (default: logs)
    - Prevents duplicate handlers

    Args:
        logger_name (str): Name of the logger
        log_dir (str, optional): Directory to store log files

    Returns:
        logging.Logger: Configured logger
    """
    logger = logging.getLogger(logger_name)

    # Already configured
    if logger.handlers:
        return logger

    log_level_name = os.getenv("LOG_LEVEL", "INFO").upper().split("#")[0].strip()
    log_level = getattr(logging, log_level_name, logging.INFO)
    logger.setLevel(log_level)
    logger.propagate = False

    log_path = Path(log_dir or os.getenv("LOG_DIR", "logs"))
    log_path.mkdir(parents=True, exist_ok=True)

    file_handler = TimedRotatingFileHandler(
        filename=log_path / f"{logger_name}.log",
        when="midnight",
        interval=1,
        backupCount=30,
        encoding="utf-8",
        delay=True,
    )
    file_handler.setFormatter(logging.Formatter(LOG_FORMAT))

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(ColoredFormatter())

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)

    logger.debug(f"Logger initialized with level {log_level_name}")

    return logger


def get_module_logger() -> logging.Logger:
    # Name the logger after the calling file, relative to the package root
    caller_frame = inspect.currentframe().f_back
    current_file = Path(caller_frame.f_code.co_filename)
    package_root = Path(__file__).resolve().parents[1]

    try:
        relative_path = current_file.resolve().relative_to(package_root)
        path_parts = list(relative_path.parent.parts) + [current_file.stem]
        logger_name = ".".join(["dgossip"] + path_parts)
    except ValueError:
        logger_name = f"dgossip.{current_file.parent.name}.{current_file.stem}"

    return setup_logger(logger_name)
