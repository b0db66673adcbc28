#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-19 11:02:17 krylon>
#
# /data/code/python/selfadapt/grad.py
# created on 19. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.grad

(c) 2026 Benjamin Walkenhorst

Reverse-mode automatic differentiation over dense float64 arrays.

A Tape records every operation as it is executed (define-by-run). Calling
backward on a scalar node walks the tape in reverse and leaves the gradient of
the root in every node that depends on a differentiable leaf. A Graph is a
build function that can be replayed on a fresh Tape with different leaf
bindings, which is what the finite difference check needs.
"""

from dataclasses import dataclass, field
from enum import Enum, auto
from typing import Callable, Final, Mapping, Optional, Sequence

import numpy as np

from selfadapt import common
from selfadapt.common import SelfAdaptError

log_floor: Final[float] = 1e-12
ln_eps: Final[float] = 1e-5
gelu_c: Final[float] = float(np.sqrt(2.0 / np.pi))
# Denominator floor of the finite difference check; central differences of a
# zero gradient are roundoff of about 1e-10.
fd_floor: Final[float] = 1e-5


class GradError(SelfAdaptError):
    """Base class for errors in the autodiff layer."""


class ShapeError(GradError):
    """Operand shapes do not fit the operation."""


class NonFiniteError(GradError):
    """An operation produced NaN or Inf."""


class RootNotScalarError(GradError):
    """backward was asked to start from a non-scalar node."""


class ForwardNotRunError(GradError):
    """backward or a gradient lookup happened before forward."""


class OpKind(Enum):
    """OpKind identifies the primitive that produced a Node."""

    Leaf = auto()
    Const = auto()
    MatMul = auto()
    Transpose = auto()
    Add = auto()
    AddRow = auto()
    Scale = auto()
    Mul = auto()
    SoftmaxRows = auto()
    LogSoftmaxRows = auto()
    Log = auto()
    Exp = auto()
    GatherRows = auto()
    GatherElements = auto()
    ConcatRows = auto()
    ConcatCols = auto()
    SliceCols = auto()
    LayerNorm = auto()
    Gelu = auto()
    Relu = auto()
    Sum = auto()


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass(kw_only=True, slots=True, eq=False)
class Node:
    """Node is one recorded value in the computation graph."""

    nid: int
    op: OpKind
    value: np.ndarray
    inputs: tuple["Node", ...] = ()
    name: str = ""
    requires_grad: bool = False
    retain_grad: bool = False
    grad: Optional[np.ndarray] = None
    backward_fn: Optional[BackwardFn] = None

    @property
    def shape(self) -> tuple[int, ...]:
        """Return the shape of the Node's value."""
        return self.value.shape

    @property
    def label(self) -> str:
        """Return a human readable identification of the Node."""
        if self.name != "":
            return f"#{self.nid}:{self.op.name}({self.name})"
        return f"#{self.nid}:{self.op.name}"

    def item(self) -> float:
        """Return the value of a scalar Node as a float."""
        if self.value.size != 1:
            raise ShapeError(f"{self.label} is not a scalar, shape is {self.shape}")
        return float(self.value.reshape(()))


class Tape:
    """Tape records operations in execution order."""

    __slots__ = [
        "bindings",
        "check_finite",
        "grad_enabled",
        "leaves",
        "nodes",
        "ran_backward",
    ]

    def __init__(self,
                 bindings: Optional[Mapping[str, np.ndarray]] = None,
                 grad_enabled: bool = True,
                 check_finite: bool = True) -> None:
        self.bindings: Mapping[str, np.ndarray] = bindings if bindings is not None else {}
        self.grad_enabled = grad_enabled
        self.check_finite = check_finite
        self.nodes: list[Node] = []
        self.leaves: dict[str, Node] = {}
        self.ran_backward = False

    # Recording

    def _record(self,
                op: OpKind,
                value: np.ndarray,
                inputs: tuple[Node, ...],
                backward_fn: Optional[BackwardFn],
                name: str = "") -> Node:
        nid: Final[int] = len(self.nodes)
        if self.check_finite and not np.isfinite(value).all():
            raise NonFiniteError(f"Node #{nid} ({op.name}{' ' + name if name else ''}) "
                                 "produced a non-finite value")
        req: Final[bool] = self.grad_enabled and any(x.requires_grad for x in inputs)
        node = Node(nid=nid,
                    op=op,
                    value=value,
                    inputs=inputs,
                    name=name,
                    requires_grad=req,
                    backward_fn=backward_fn if req else None)
        self.nodes.append(node)
        return node

    def leaf(self,
             name: str,
             value: Optional[np.ndarray] = None,
             requires_grad: bool = True) -> Node:
        """Create a named leaf. Without an explicit value, the binding is used."""
        if name in self.leaves:
            raise GradError(f"Leaf {name} is bound twice")
        if value is None:
            if name not in self.bindings:
                raise GradError(f"Leaf {name} is not bound")
            value = self.bindings[name]
        arr = np.asarray(value, dtype=np.float64)
        nid: Final[int] = len(self.nodes)
        if self.check_finite and not np.isfinite(arr).all():
            raise NonFiniteError(f"Leaf #{nid} ({name}) is not finite")
        node = Node(nid=nid,
                    op=OpKind.Leaf,
                    value=arr,
                    name=name,
                    requires_grad=requires_grad and self.grad_enabled)
        self.nodes.append(node)
        self.leaves[name] = node
        return node

    def const(self, value: np.ndarray, name: str = "") -> Node:
        """Create a constant Node that never receives a gradient."""
        arr = np.asarray(value, dtype=np.float64)
        node = Node(nid=len(self.nodes), op=OpKind.Const, value=arr, name=name)
        self.nodes.append(node)
        return node

    # Primitives

    def matmul(self, a: Node, b: Node) -> Node:
        """Matrix product of two 2-D nodes."""
        if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul of {a.label} {a.shape} and {b.label} {b.shape}")
        av, bv = a.value, b.value
        return self._record(OpKind.MatMul, av @ bv, (a, b),
                            lambda g: (g @ bv.T, av.T @ g))

    def transpose(self, x: Node) -> Node:
        """Transpose a 2-D node."""
        if x.value.ndim != 2:
            raise ShapeError(f"transpose of {x.label} {x.shape}")
        return self._record(OpKind.Transpose, x.value.T, (x, ), lambda g: (g.T, ))

    def add(self, a: Node, b: Node) -> Node:
        """Elementwise sum of two nodes of identical shape."""
        if a.shape != b.shape:
            raise ShapeError(f"add of {a.label} {a.shape} and {b.label} {b.shape}")
        return self._record(OpKind.Add, a.value + b.value, (a, b), lambda g: (g, g))

    def sub(self, a: Node, b: Node) -> Node:
        """Elementwise difference, a - b."""
        return self.add(a, self.scale(b, -1.0))

    def add_row(self, x: Node, b: Node) -> Node:
        """Add the vector b to every row of the 2-D node x."""
        if x.value.ndim != 2 or b.value.ndim != 1 or x.shape[1] != b.shape[0]:
            raise ShapeError(f"add_row of {x.label} {x.shape} and {b.label} {b.shape}")
        return self._record(OpKind.AddRow, x.value + b.value, (x, b),
                            lambda g: (g, g.sum(axis=0)))

    def scale(self, x: Node, c: float) -> Node:
        """Multiply by a constant scalar."""
        c = float(c)
        return self._record(OpKind.Scale, x.value * c, (x, ), lambda g: (g * c, ))

    def mul(self, a: Node, b: Node) -> Node:
        """Elementwise product of two nodes of identical shape."""
        if a.shape != b.shape:
            raise ShapeError(f"mul of {a.label} {a.shape} and {b.label} {b.shape}")
        av, bv = a.value, b.value
        return self._record(OpKind.Mul, av * bv, (a, b), lambda g: (g * bv, g * av))

    def softmax_rows(self, x: Node, causal: bool = False, name: str = "") -> Node:
        """Row-wise softmax. With causal set, entries right of the diagonal are 0."""
        if x.value.ndim != 2:
            raise ShapeError(f"softmax_rows of {x.label} {x.shape}")
        z = x.value
        if causal:
            if z.shape[0] != z.shape[1]:
                raise ShapeError(f"causal softmax needs a square input, {x.label} is {x.shape}")
            z = np.where(np.tril(np.ones(z.shape, dtype=bool)), z, -np.inf)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=1, keepdims=True)

        def bwd(g: np.ndarray) -> tuple[np.ndarray]:
            return (s * (g - (g * s).sum(axis=1, keepdims=True)), )

        return self._record(OpKind.SoftmaxRows, s, (x, ), bwd, name)

    def log_softmax_rows(self, x: Node) -> Node:
        """Row-wise log-softmax."""
        if x.value.ndim != 2:
            raise ShapeError(f"log_softmax_rows of {x.label} {x.shape}")
        z = x.value - x.value.max(axis=1, keepdims=True)
        ls = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        s = np.exp(ls)
        return self._record(OpKind.LogSoftmaxRows, ls, (x, ),
                            lambda g: (g - s * g.sum(axis=1, keepdims=True), ))

    def log(self, x: Node) -> Node:
        """Natural logarithm with a floor of 1e-12."""
        xv = np.maximum(x.value, log_floor)
        live = x.value > log_floor
        return self._record(OpKind.Log, np.log(xv), (x, ),
                            lambda g: (np.where(live, g / xv, 0.0), ))

    def exp(self, x: Node) -> Node:
        """Elementwise exponential."""
        y = np.exp(x.value)
        return self._record(OpKind.Exp, y, (x, ), lambda g: (g * y, ))

    def gather_rows(self, table: Node, idx: Sequence[int]) -> Node:
        """Select rows of a 2-D node by index (embedding lookup)."""
        ix = np.asarray(idx, dtype=np.int64)
        if table.value.ndim != 2 or (ix.size > 0 and (ix.min() < 0 or ix.max() >= table.shape[0])):
            raise ShapeError(f"gather_rows out of range on {table.label} {table.shape}")
        shape = table.shape

        def bwd(g: np.ndarray) -> tuple[np.ndarray]:
            gt = np.zeros(shape)
            np.add.at(gt, ix, g)
            return (gt, )

        return self._record(OpKind.GatherRows, table.value[ix], (table, ), bwd)

    def gather_elements(self, x: Node, rows: Sequence[int], cols: Sequence[int]) -> Node:
        """Pick x[rows[k], cols[k]] for every k into a vector."""
        r = np.asarray(rows, dtype=np.int64)
        c = np.asarray(cols, dtype=np.int64)
        if x.value.ndim != 2 or r.shape != c.shape:
            raise ShapeError(f"gather_elements on {x.label} {x.shape}")
        shape = x.shape

        def bwd(g: np.ndarray) -> tuple[np.ndarray]:
            gx = np.zeros(shape)
            np.add.at(gx, (r, c), g)
            return (gx, )

        return self._record(OpKind.GatherElements, x.value[r, c], (x, ), bwd)

    def concat_rows(self, xs: Sequence[Node]) -> Node:
        """Stack 2-D nodes on top of each other."""
        if len(xs) == 0 or any(x.value.ndim != 2 or x.shape[1] != xs[0].shape[1] for x in xs):
            raise ShapeError("concat_rows needs 2-D nodes with equal column counts")
        cuts = np.cumsum([x.shape[0] for x in xs])[:-1]
        return self._record(OpKind.ConcatRows,
                            np.concatenate([x.value for x in xs], axis=0),
                            tuple(xs),
                            lambda g: tuple(np.split(g, cuts, axis=0)))

    def concat_cols(self, xs: Sequence[Node]) -> Node:
        """Place 2-D nodes side by side."""
        if len(xs) == 0 or any(x.value.ndim != 2 or x.shape[0] != xs[0].shape[0] for x in xs):
            raise ShapeError("concat_cols needs 2-D nodes with equal row counts")
        cuts = np.cumsum([x.shape[1] for x in xs])[:-1]
        return self._record(OpKind.ConcatCols,
                            np.concatenate([x.value for x in xs], axis=1),
                            tuple(xs),
                            lambda g: tuple(np.split(g, cuts, axis=1)))

    def slice_cols(self, x: Node, start: int, stop: int) -> Node:
        """Return the columns start..stop-1 of a 2-D node."""
        if x.value.ndim != 2 or not 0 <= start < stop <= x.shape[1]:
            raise ShapeError(f"slice_cols {start}:{stop} of {x.label} {x.shape}")
        shape = x.shape

        def bwd(g: np.ndarray) -> tuple[np.ndarray]:
            gx = np.zeros(shape)
            gx[:, start:stop] = g
            return (gx, )

        return self._record(OpKind.SliceCols, x.value[:, start:stop], (x, ), bwd)

    def layer_norm(self, x: Node, gain: Node, bias: Node) -> Node:
        """Normalize every row of x, then apply gain and bias."""
        if x.value.ndim != 2 or gain.shape != (x.shape[1], ) or bias.shape != gain.shape:
            raise ShapeError(f"layer_norm of {x.label} {x.shape}")
        mu = x.value.mean(axis=1, keepdims=True)
        sigma = np.sqrt(x.value.var(axis=1, keepdims=True) + ln_eps)
        xhat = (x.value - mu) / sigma
        gv = gain.value

        def bwd(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
            gx_hat = g * gv
            gx = (gx_hat
                  - gx_hat.mean(axis=1, keepdims=True)
                  - xhat * (gx_hat * xhat).mean(axis=1, keepdims=True)) / sigma
            return gx, (g * xhat).sum(axis=0), g.sum(axis=0)

        return self._record(OpKind.LayerNorm, xhat * gv + bias.value, (x, gain, bias), bwd)

    def gelu(self, x: Node) -> Node:
        """GELU, tanh approximation."""
        xv = x.value
        t = np.tanh(gelu_c * (xv + 0.044715 * xv ** 3))
        y = 0.5 * xv * (1.0 + t)

        def bwd(g: np.ndarray) -> tuple[np.ndarray]:
            dt = (1.0 - t ** 2) * gelu_c * (1.0 + 3 * 0.044715 * xv ** 2)
            return (g * (0.5 * (1.0 + t) + 0.5 * xv * dt), )

        return self._record(OpKind.Gelu, y, (x, ), bwd)

    def relu(self, x: Node) -> Node:
        """Rectified linear unit."""
        live = x.value > 0
        return self._record(OpKind.Relu, np.where(live, x.value, 0.0), (x, ),
                            lambda g: (np.where(live, g, 0.0), ))

    def sum(self, x: Node) -> Node:
        """Sum all entries into a scalar."""
        shape = x.shape
        return self._record(OpKind.Sum, np.asarray(x.value.sum()), (x, ),
                            lambda g: (np.full(shape, float(g)), ))

    def weighted_sum(self, x: Node, weights: np.ndarray) -> Node:
        """Sum of x times constant weights."""
        return self.sum(self.mul(x, self.const(np.asarray(weights, dtype=np.float64).reshape(x.shape))))

    # Differentiation

    def backward(self, root: Node, keep_all: bool = True) -> dict[Node, np.ndarray]:
        """Propagate d(root)/d(node) to every node on the tape.

        Unless keep_all is set, only leaves and nodes flagged retain_grad keep
        their gradient once it has been passed on.
        """
        if len(self.nodes) == 0 or root.nid >= len(self.nodes) or self.nodes[root.nid] is not root:
            raise ForwardNotRunError("backward called with a root that is not on this tape")
        if root.value.size != 1:
            raise RootNotScalarError(f"backward needs a scalar root, {root.label} has shape "
                                     f"{root.shape}")

        for node in self.nodes:
            node.grad = None
        root.grad = np.ones_like(root.value)

        for node in reversed(self.nodes[:root.nid + 1]):
            g = node.grad
            if g is None or node.backward_fn is None:
                continue
            parts = node.backward_fn(g)
            for parent, pg in zip(node.inputs, parts):
                if pg is None or not parent.requires_grad:
                    continue
                pg = np.asarray(pg, dtype=np.float64).reshape(parent.shape)
                if parent.grad is None:
                    parent.grad = pg.copy()
                else:
                    parent.grad = parent.grad + pg
            if not keep_all and node.op != OpKind.Leaf and not node.retain_grad and node is not root:
                node.grad = None

        self.ran_backward = True
        return {n: n.grad for n in self.nodes if n.grad is not None}

    def leaf_grad(self, name: str) -> np.ndarray:
        """Return the gradient of a leaf, zeros if it did not influence the root."""
        if not self.ran_backward:
            raise ForwardNotRunError("No backward pass has been run on this tape")
        if name not in self.leaves:
            raise GradError(f"No leaf named {name}")
        node = self.leaves[name]
        if node.grad is None:
            return np.zeros(node.shape)
        return node.grad


@dataclass(kw_only=True, slots=True)
class Graph:
    """Graph is a replayable computation: build records it on a Tape."""

    build: Callable[[Tape], Node]
    tape: Optional[Tape] = field(default=None)
    root: Optional[Node] = field(default=None)


def forward(graph: Graph,
            bindings: Mapping[str, np.ndarray],
            grad_enabled: bool = True) -> np.ndarray:
    """Run the Graph on a fresh Tape with the given leaf bindings."""
    tape = Tape(bindings=bindings, grad_enabled=grad_enabled)
    root = graph.build(tape)
    graph.tape = tape
    graph.root = root
    return root.value


def backward(graph: Graph, root: Optional[Node] = None) -> dict[Node, np.ndarray]:
    """Differentiate the Graph's root (or root) after forward."""
    if graph.tape is None or graph.root is None:
        raise ForwardNotRunError("forward must run before backward")
    return graph.tape.backward(root if root is not None else graph.root)


def leaf_grads(graph: Graph) -> dict[str, np.ndarray]:
    """Return the gradients of all named leaves after backward."""
    if graph.tape is None:
        raise ForwardNotRunError("forward must run before backward")
    return {name: graph.tape.leaf_grad(name) for name in graph.tape.leaves}


def finite_difference_check(graph: Graph,
                            leaf_name: str,
                            step: float,
                            bindings: Mapping[str, np.ndarray]) -> float:
    """Compare analytic gradients of one leaf with central differences.

    Returns the maximum over the leaf's entries of
    |analytic - central| / max(|analytic| + |central|, fd_floor).
    """
    if step <= 0:
        raise GradError(f"Finite difference step must be positive, got {step}")
    forward(graph, bindings)
    backward(graph)
    assert graph.tape is not None
    analytic: Final[np.ndarray] = graph.tape.leaf_grad(leaf_name).copy()

    base = np.asarray(bindings[leaf_name], dtype=np.float64)
    worst: float = 0.0
    for idx in np.ndindex(base.shape if base.ndim > 0 else ()):
        moved = base.copy()
        moved[idx] += step
        f_plus = float(forward(graph, {**bindings, leaf_name: moved}, False).reshape(()))
        moved[idx] -= 2 * step
        f_minus = float(forward(graph, {**bindings, leaf_name: moved}, False).reshape(()))
        central = (f_plus - f_minus) / (2 * step)
        a = float(analytic[idx])
        err = abs(a - central) / max(abs(a) + abs(central), fd_floor)
        worst = max(worst, err)

    # Leave the graph in the analytic state for the caller.
    forward(graph, bindings)
    backward(graph)
    common.get_logger("grad").debug("FD check of %s: max relative error %.3e",
                                    leaf_name,
                                    worst)
    return worst


# Local Variables: #
# python-indent: 4 #
# End: #
