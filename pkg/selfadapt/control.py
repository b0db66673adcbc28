#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-19 18:40:02 krylon>
#
# /data/code/python/selfadapt/control.py
# created on 19. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.control

(c) 2026 Benjamin Walkenhorst

Messages passed to the worker threads of a pool.
"""

from dataclasses import dataclass
from enum import Enum, auto
from typing import Any, Optional


class Cmd(Enum):
    """Cmd tells a worker what to do next."""

    Job = auto()
    Stop = auto()


@dataclass(kw_only=True, slots=True)
class Message:
    """Message is one item on a worker's queue.

    Seq orders the results of Job messages, Payload is the job's argument.
    """

    Tag: Cmd
    Seq: int = -1
    Payload: Optional[Any] = None


@dataclass(kw_only=True, slots=True)
class Outcome:
    """Outcome is a worker's answer to one Job message."""

    Seq: int
    Result: Optional[Any] = None
    Error: Optional[BaseException] = None


# Local Variables: #
# python-indent: 4 #
# End: #
