from .error_handler import handle_excepthook, thread_excepthook
from .thread_logger import (
    clear_thread_logger_prefix,
    get_thread_logger,
    set_thread_logger_prefix,
)
from .work_queue import Outcome, run_ordered
