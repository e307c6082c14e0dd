# Standard library
import logging

# Third-party
from astropy.logger import StreamHandler

__all__ = ["logger"]


class SkybeamHandler(StreamHandler):
    def emit(self, record):
        record.origin = "skybeam"
        super().emit(record)


class SkybeamLogger(logging.getLoggerClass()):
    def _set_defaults(self):
        """Reset logger to its initial state"""

        # Remove all previous handlers
        for handler in self.handlers[:]:
            self.removeHandler(handler)

        # Set default level
        self.setLevel(logging.INFO)

        # Set up the stdout handler
        sh = SkybeamHandler()
        self.addHandler(sh)


_default_logger_class = logging.getLoggerClass()
logging.setLoggerClass(SkybeamLogger)
logger = logging.getLogger("skybeam")
logging.setLoggerClass(_default_logger_class)
logger._set_defaults()
