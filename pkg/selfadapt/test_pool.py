#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-20 19:50:02 krylon>
#
# /data/code/python/selfadapt/test_pool.py
# created on 20. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.test_pool

(c) 2026 Benjamin Walkenhorst
"""


import os
import shutil
import unittest
from datetime import datetime
from typing import Final

from selfadapt import common
from selfadapt.pool import WorkerPool

test_dir: Final[str] = os.path.join(
    "/tmp",
    datetime.now().strftime(f"{common.AppName.lower()}_test_pool_%Y%m%d_%H%M%S"))


def square(x: int) -> int:
    """Square x, refusing 13."""
    if x == 13:
        raise common.SelfAdaptError("unlucky")
    return x * x


def broken(x: int) -> int:
    """Fail with an error that is not ours."""
    raise ZeroDivisionError(f"{x} / 0")


class TestPool(unittest.TestCase):
    """Test the worker pool."""

    @classmethod
    def setUpClass(cls) -> None:
        """Prepare the testing environment."""
        common.set_basedir(test_dir)

    @classmethod
    def tearDownClass(cls) -> None:
        """Clean up afterwards."""
        shutil.rmtree(test_dir, ignore_errors=True)

    def test_01_order(self) -> None:
        """Results come back in input order, for any number of workers."""
        items = list(range(40))
        for wcnt in (1, 3, 8):
            with self.subTest(wcnt=wcnt):
                pool: WorkerPool[int, int] = WorkerPool(fn=square, wcnt=wcnt)
                got = pool.map(items)
                self.assertEqual(got[:13], [x * x for x in range(13)])
                self.assertIsNone(got[13])
                self.assertEqual(got[14:], [x * x for x in range(14, 40)])
                self.assertEqual(pool.failed, 1)

    def test_02_foreign_errors(self) -> None:
        """Errors that are not SelfAdaptErrors propagate."""
        for wcnt in (1, 4):
            with self.subTest(wcnt=wcnt):
                pool: WorkerPool[int, int] = WorkerPool(fn=broken, wcnt=wcnt)
                with self.assertRaises(ZeroDivisionError):
                    pool.map([1, 2, 3])

    def test_03_empty(self) -> None:
        """An empty input gives an empty result."""
        pool: WorkerPool[int, int] = WorkerPool(fn=square, wcnt=4)
        self.assertEqual(pool.map([]), [])


# Local Variables: #
# python-indent: 4 #
# End: #
