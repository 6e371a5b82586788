import logging
import threading
from typing import Tuple, Union


class PrefixLoggerAdapter(logging.LoggerAdapter):
    """A logger adapter that adds a prefix to every message"""

    def process(self, msg: str, kwargs: dict) -> Tuple[str, dict]:
        return (f'[{self.extra["prefix"]}] {msg}', kwargs)


logger_prefix = threading.local()


def set_thread_logger_prefix(prefix: str) -> None:
    """Store the prefix of the current thread, e.g. the sweep row it computes

    Loggers fetched afterwards with get_thread_logger(with_prefix=True)
    carry it.
    """
    logger_prefix.prefix = prefix


def clear_thread_logger_prefix() -> None:
    """Forget the prefix of the current thread"""
    if hasattr(logger_prefix, "prefix"):
        del logger_prefix.prefix


def get_thread_logger(
    with_prefix: bool,
) -> Union[logging.Logger, logging.LoggerAdapter]:
    """Get the logger of the current thread, with its prefix if one is set"""
    logger = logging.getLogger(f"washboard.{threading.current_thread().name}")
    # if the prefix is not set, return the original logger
    if not with_prefix or not hasattr(logger_prefix, "prefix"):
        return logger

    return PrefixLoggerAdapter(logger, extra={"prefix": logger_prefix.prefix})
