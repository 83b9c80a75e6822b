import os
import logging
from colorama import init, Fore, Style

# Add SUCCESS level between INFO and WARNING
logging.SUCCESS = 25  # Between INFO(20) and WARNING(30)
logging.addLevelName(logging.SUCCESS, 'SUCCESS')

LOGGER_NAME = 'futureboost'
LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


class ColorFormatter(logging.Formatter):
    """Console formatter colouring each record by level."""

    FORMATS = {
        logging.DEBUG: Fore.CYAN + LOG_FORMAT + Style.RESET_ALL,
        logging.INFO: Fore.GREEN + LOG_FORMAT + Style.RESET_ALL,
        logging.SUCCESS: Fore.BLUE + Style.BRIGHT + LOG_FORMAT + Style.RESET_ALL,
        logging.WARNING: Fore.YELLOW + LOG_FORMAT + Style.RESET_ALL,
        logging.ERROR: Fore.RED + LOG_FORMAT + Style.RESET_ALL,
        logging.CRITICAL: Fore.RED + Style.BRIGHT + LOG_FORMAT + Style.RESET_ALL
    }

    def format(self, record):
        log_fmt = self.FORMATS.get(record.levelno, LOG_FORMAT)
        formatter = logging.Formatter(log_fmt, datefmt=DATE_FORMAT)
        return formatter.format(record)


class Logger:
    """Utility class for handling logging operations.

    All instances share the ``futureboost`` logger: a coloured console handler
    plus an optional UTF-8 run journal set through ``set_log_file``.
    """

    # Class variable for global log level
    _global_level = logging.SUCCESS
    _log_file = None

    def __init__(self, name=LOGGER_NAME):
        """Initialize the logger, configuring handlers on first use."""
        # Initialize colorama for cross-platform color support
        init()

        self.logger = logging.getLogger(name)
        if self._log_file is not None:
            self.logger.setLevel(min(self._global_level, logging.INFO))
        else:
            self.logger.setLevel(self._global_level)

        if not any(isinstance(h, logging.StreamHandler) and not isinstance(h, logging.FileHandler)
                   for h in self.logger.handlers):
            console_handler = logging.StreamHandler()
            console_handler.setFormatter(ColorFormatter())
            console_handler.setLevel(self._global_level)
            self.logger.addHandler(console_handler)

        # Prevent propagation to root logger
        self.logger.propagate = False

    @classmethod
    def set_global_level(cls, level):
        """Set the global logging level for all logger instances."""
        cls._global_level = level
        # Update existing loggers
        for logger in logging.Logger.manager.loggerDict.values():
            if isinstance(logger, logging.Logger) and logger.name.startswith(LOGGER_NAME):
                logger.setLevel(level)
                for handler in logger.handlers:
                    if not isinstance(handler, logging.FileHandler):
                        handler.setLevel(level)

    @classmethod
    def set_log_file(cls, filepath):
        """Attach the run journal file handler (replacing any previous one)."""
        logger = logging.getLogger(LOGGER_NAME)
        for handler in logger.handlers[:]:
            if isinstance(handler, logging.FileHandler):
                handler.close()
                logger.removeHandler(handler)

        cls._log_file = filepath
        if filepath is None:
            return

        os.makedirs(os.path.dirname(os.path.abspath(filepath)), exist_ok=True)
        file_handler = logging.FileHandler(filepath, encoding='utf-8', mode='a')
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
        # The journal always keeps INFO and above, whatever the console level
        file_handler.setLevel(logging.INFO)
        logger.addHandler(file_handler)
        logger.setLevel(min(cls._global_level, logging.INFO))

    def info(self, message):
        """Log info level message in green."""
        self.logger.info(message)

    def error(self, message):
        """Log error level message in red."""
        self.logger.error(message)

    def debug(self, message):
        """Log debug level message in cyan."""
        self.logger.debug(message)

    def success(self, message):
        """Log success level message in bright blue."""
        self.logger.log(logging.SUCCESS, message)

    def warning(self, message):
        """Log warning level message in yellow."""
        self.logger.warning(message)
