#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-20 21:31:08 krylon>
#
# /data/code/python/selfadapt/common.py
# created on 19. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.common

(c) 2026 Benjamin Walkenhorst
"""

import hashlib
import logging
import logging.handlers
import os
import pathlib
import sys
from collections import defaultdict
from threading import Lock
from typing import Final, Optional

AppName: Final[str] = "SelfAdapt"
AppVersion: Final[str] = "0.1.0"

log_level_tty: int = logging.INFO

log_levels: Final[defaultdict[str, int]] = defaultdict(lambda: logging.DEBUG)

log_levels["grad"] = logging.INFO
log_levels["decoding"] = logging.INFO
log_levels["pool"] = logging.INFO
log_levels["saliency"] = logging.INFO
log_levels["adaptation"] = logging.INFO

log_format: Final[str] = "%(asctime)s (%(name)-10s:%(lineno)-4d) - %(levelname)-8s %(message)s"
log_max_size: Final[int] = 4 * 2**20
log_max_count: Final[int] = 10


class SelfAdaptError(Exception):
    """Base class for application-specific Exceptions."""


class Path:
    """Path knows where the application keeps its log files."""

    __slots__ = ["__base"]

    def __init__(self, root: str) -> None:
        self.__base = pathlib.Path(root)

    def base(self, folder: str = "") -> pathlib.Path:
        """Return the base directory, after moving it to folder if one is given."""
        if folder:
            self.__base = pathlib.Path(folder)
        return self.__base

    @property
    def log(self) -> pathlib.Path:
        """Return the path to the log file"""
        return self.__base / f"{AppName.lower()}.log"


path: Final[Path] = Path(os.path.expanduser(f"~/.{AppName.lower()}.d"))

_lock: Final[Lock] = Lock()  # pylint: disable-msg=C0103
_cache: Final[dict[str, logging.Logger]] = {}  # pylint: disable-msg=C0103
_file_handler: Optional[logging.Handler] = None  # pylint: disable-msg=C0103


def set_basedir(folder: str) -> None:
    """Move the base directory. Loggers created afterwards write below it."""
    global _file_handler  # pylint: disable-msg=W0603
    with _lock:
        path.base(str(folder))
        _file_handler = None
    init_app()


def init_app() -> None:
    """Create the base directory if it does not exist yet."""
    path.base().mkdir(parents=True, exist_ok=True)


def _log_file() -> logging.Handler:
    """Return the rotating file handler shared by all loggers of the current base dir."""
    global _file_handler  # pylint: disable-msg=W0603
    if _file_handler is None:
        _file_handler = logging.handlers.RotatingFileHandler(path.log,
                                                             "a",
                                                             log_max_size,
                                                             log_max_count)
        _file_handler.setFormatter(logging.Formatter(log_format))
    return _file_handler


def get_logger(name: str, terminal: bool = True) -> logging.Logger:
    """Create and return a logger with the given name"""
    with _lock:
        init_app()

        if name in _cache:
            return _cache[name]

        log = logging.getLogger(f"{AppName.lower()}.{name}")
        log.setLevel(log_levels[name])
        log.propagate = False
        log.addHandler(_log_file())

        if terminal:
            tty = logging.StreamHandler(sys.stdout)
            tty.setFormatter(logging.Formatter(log_format))
            tty.setLevel(log_level_tty)
            log.addHandler(tty)

        _cache[name] = log
        return log


def derive_seed(seed: int, component: str) -> int:
    """Derive the seed of a stochastic component from the global seed.

    The rule is fixed: blake2b over "<seed>/<component>", first 8 bytes,
    masked to 63 bits. Components therefore never share a random stream.
    """
    digest = hashlib.blake2b(f"{seed}/{component}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") & ((1 << 63) - 1)


# Local Variables: #
# python-indent: 4 #
# End: #
