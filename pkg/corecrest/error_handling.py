import logging
import os
import sys
import types

from .errors import CorecrestError

logger = logging.getLogger(__name__)


def global_exception_handler(
    exc_type: type[BaseException],
    exc_value: BaseException,
    exc_traceback: types.TracebackType | None,
):
    """
    Process-wide hook for exceptions nothing else caught.

    Known tool errors are logged on one line with their exit code; anything
    else is logged with its traceback and handed on to the default hook.
    """
    if isinstance(exc_value, CorecrestError):
        logger.error(f"[{os.getpid()}] {exc_type.__name__} (exit {exc_value.exit_code}): {exc_value}")
        return

    logger.error(
        f"[{os.getpid()}] EXCEPTION: {exc_type.__name__}: {exc_value}",
        exc_info=(exc_type, exc_value, exc_traceback),
    )
    sys.__excepthook__(exc_type, exc_value, exc_traceback)


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, CorecrestError):
        return error.exit_code
    return 1
