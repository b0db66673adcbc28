#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-19 15:40:12 krylon>
#
# /data/code/python/selfadapt/optim.py
# created on 19. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.optim

(c) 2026 Benjamin Walkenhorst
"""

from dataclasses import dataclass, field
from typing import Final, Mapping

import numpy as np


@dataclass(kw_only=True, slots=True)
class AdamState:
    """AdamState holds the moment estimates of an Adam optimizer."""

    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def to_arrays(self) -> dict[str, np.ndarray]:
        """Flatten the state for a checkpoint."""
        out: dict[str, np.ndarray] = {"step": np.array(self.step)}
        for k, x in self.m.items():
            out[f"m/{k}"] = x
        for k, x in self.v.items():
            out[f"v/{k}"] = x
        return out

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray]) -> 'AdamState':
        """Restore a state flattened by to_arrays."""
        if "step" not in arrays:
            return cls()
        return cls(step=int(arrays["step"]),
                   m={k[2:]: x.copy() for k, x in arrays.items() if k.startswith("m/")},
                   v={k[2:]: x.copy() for k, x in arrays.items() if k.startswith("v/")})


@dataclass(kw_only=True, slots=True)
class Adam:
    """Adam optimizer over a dict of named numpy arrays."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    state: AdamState = field(default_factory=AdamState)

    def update(self,
               values: dict[str, np.ndarray],
               grads: Mapping[str, np.ndarray]) -> None:
        """Apply one step to the entries of values named in grads.

        Arrays in values are replaced, never modified in place, so copies
        handed out earlier stay valid.
        """
        st: Final[AdamState] = self.state
        st.step += 1
        c1: Final[float] = 1.0 - self.beta1 ** st.step
        c2: Final[float] = 1.0 - self.beta2 ** st.step
        for name, g in grads.items():
            m = st.m.get(name, np.zeros_like(g))
            v = st.v.get(name, np.zeros_like(g))
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            st.m[name] = m
            st.v[name] = v
            values[name] = values[name] - self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)


# Local Variables: #
# python-indent: 4 #
# End: #
