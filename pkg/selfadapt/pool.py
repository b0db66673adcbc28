#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-19 18:58:44 krylon>
#
# /data/code/python/selfadapt/pool.py
# created on 19. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.pool

(c) 2026 Benjamin Walkenhorst

A small pool of worker threads for read-only work over shared parameters,
decoding and scoring one utterance per job.
"""

import logging
from dataclasses import dataclass, field
from queue import Queue
from threading import RLock, Thread
from typing import Callable, Final, Generic, Optional, Sequence, TypeVar

from selfadapt import common
from selfadapt.control import Cmd, Message, Outcome

In = TypeVar("In")
Out = TypeVar("Out")


@dataclass(kw_only=True, slots=True)
class WorkerPool(Generic[In, Out]):
    """WorkerPool maps a function over a list of items with wcnt threads.

    Results come back in input order. A job that raises is logged and its
    slot is None: one bad utterance must not abort a run.
    """

    fn: Callable[[In], Out]
    wcnt: int = 1
    name: str = "pool"
    log: logging.Logger = field(default_factory=lambda: common.get_logger("pool"))
    lock: RLock = field(default_factory=RLock)
    jobQ: Queue[Message] = field(init=False)
    resQ: Queue[Outcome] = field(init=False)
    failed: int = 0

    def __post_init__(self) -> None:
        assert self.wcnt > 0
        self.jobQ = Queue()
        self.resQ = Queue()

    def _worker(self, wid: int) -> None:
        self.log.debug("Worker %s.%02d starting up.", self.name, wid)
        try:
            while True:
                msg: Message = self.jobQ.get()
                match msg.Tag:
                    case Cmd.Stop:
                        return
                    case Cmd.Job:
                        try:
                            res = self.fn(msg.Payload)
                            self.resQ.put(Outcome(Seq=msg.Seq, Result=res))
                        except Exception as err:  # pylint: disable-msg=W0718
                            self.resQ.put(Outcome(Seq=msg.Seq, Error=err))
        finally:
            self.log.debug("Worker %s.%02d is quitting.", self.name, wid)

    def _run_inline(self, items: Sequence[In]) -> list[Optional[Out]]:
        out: list[Optional[Out]] = []
        for i, item in enumerate(items):
            try:
                out.append(self.fn(item))
            except common.SelfAdaptError as err:
                self._report(i, err)
                out.append(None)
        return out

    def _report(self, seq: int, err: BaseException) -> None:
        with self.lock:
            self.failed += 1
        self.log.warning("%s: job %d failed: %s: %s",
                         self.name,
                         seq,
                         err.__class__.__name__,
                         err)

    def map(self, items: Sequence[In]) -> list[Optional[Out]]:
        """Apply fn to every item; failures leave None in their slot."""
        if self.wcnt == 1 or len(items) < 2:
            return self._run_inline(items)

        cnt: Final[int] = min(self.wcnt, len(items))
        threads: list[Thread] = []
        for wid in range(cnt):
            thr = Thread(target=self._worker,
                         args=(wid, ),
                         daemon=True,
                         name=f"{self.name}.worker{wid:02d}")
            thr.start()
            threads.append(thr)

        for i, item in enumerate(items):
            self.jobQ.put(Message(Tag=Cmd.Job, Seq=i, Payload=item))
        for _ in threads:
            self.jobQ.put(Message(Tag=Cmd.Stop))

        out: list[Optional[Out]] = [None] * len(items)
        for _ in range(len(items)):
            res = self.resQ.get()
            if res.Error is not None:
                if not isinstance(res.Error, common.SelfAdaptError):
                    for thr in threads:
                        thr.join()
                    raise res.Error
                self._report(res.Seq, res.Error)
            else:
                out[res.Seq] = res.Result

        for thr in threads:
            thr.join()
        return out


# Local Variables: #
# python-indent: 4 #
# End: #
