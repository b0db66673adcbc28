#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-19 09:12:40 krylon>
#
# /data/code/python/selfadapt/__init__.py
# created on 19. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.__init__

(c) 2026 Benjamin Walkenhorst

Unsupervised, self-improving domain adaptation of a small decoder-only
transformer, using the prompt reliance of its attention saliency as a
label-free quality score.
"""

# Local Variables: #
# python-indent: 4 #
# End: #
