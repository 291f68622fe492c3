import logging
import sys


def setup_logging(level=logging.INFO, log_to_file=False, filename="congestion_design.log"):
    """
    Configure global logging with console output and an optional log file.

    Repeated calls replace the handlers installed by earlier calls, so the CLI can be
    invoked several times in one process (as the tests do).

    Args:
        level (int | str): Logging level (e.g., logging.INFO or "DEBUG").
        log_to_file (bool): Whether to also log messages to a file.
        filename (str): Filename for file logging.
    """
    formatter = logging.Formatter(
        "[%(asctime)s] [%(levelname)s] %(name)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    handler = logging.StreamHandler(sys.stdout)
    handler.setFormatter(formatter)
    handlers = [handler]

    if log_to_file:
        file_handler = logging.FileHandler(filename)
        file_handler.setFormatter(formatter)
        handlers.append(file_handler)

    logging.basicConfig(level=level, handlers=handlers, force=True)

    # matplotlib is chatty at DEBUG (font manager)
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
