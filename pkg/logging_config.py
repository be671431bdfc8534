# === logging_config.py ===
"""
Centralized logging configuration to be imported by the CLI.
Modules only call logging.getLogger(__name__).
"""

import logging


def setup_logging(level=logging.INFO):
    fmt = "%(asctime)s | %(levelname)s | %(name)s | %(message)s"
    logging.basicConfig(level=level, format=fmt, force=True)
    # reduce verbosity of some noisy libs
    for noisy in ("matplotlib", "numexpr", "sklearn"):
        logging.getLogger(noisy).setLevel(logging.WARNING)
