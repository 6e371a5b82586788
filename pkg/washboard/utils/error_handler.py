"""Exception hooks installed by the command line front end"""
import sys
import threading
import traceback

from washboard.utils.thread_logger import get_thread_logger


def _log_stack(typ, message, stack):
    logger = get_thread_logger(with_prefix=True)
    stack_info = traceback.StackSummary.extract(
        traceback.walk_tb(stack), capture_locals=True
    ).format()
    logger.critical("An exception occured: %s: %s.", typ, message)
    for i in stack_info:
        logger.critical(i.encode().decode("unicode-escape"))


def handle_excepthook(typ, message, stack):
    """Custom exception handler

    Print detailed stack information with local variables
    """
    if issubclass(typ, KeyboardInterrupt):
        sys.__excepthook__(typ, message, stack)
        return

    _log_stack(typ, message, stack)


def thread_excepthook(args):
    """Exception logger for worker threads"""
    if issubclass(args.exc_type, KeyboardInterrupt):
        threading.__excepthook__(args)
        return

    _log_stack(args.exc_type, args.exc_value, args.exc_traceback)
