# -*- coding: utf-8 -*-
"""Dense 2-D tensors recorded on a define-by-run tape."""

import contextvars
import numpy as np

from common.exceptions import ContractError, DimensionError

_ACTIVE_TAPE = contextvars.ContextVar('udon_active_tape', default=None)


class Node(object):
    """One operation record on the tape."""

    __slots__ = ('tape', 'index', 'op', 'parents', 'output', 'backward_fn')

    def __init__(self, tape, index, op, parents, output, backward_fn):
        self.tape = tape
        self.index = index
        self.op = op
        self.parents = parents
        self.output = output
        # maps the output gradient to one gradient (or None) per parent
        self.backward_fn = backward_fn

    def __repr__(self):
        return "Node(#{} {})".format(self.index, self.op)


class Tape(object):
    """Append-only list of operation records.

    Use as a context manager; every op evaluated inside the block whose
    inputs require a gradient appends a node. Outside any tape, ops only
    compute values.
    """

    def __init__(self):
        self.nodes = []
        self._token = None

    def __enter__(self):
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *args):
        _ACTIVE_TAPE.reset(self._token)
        self._token = None
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, op, parents, output, backward_fn):
        node = Node(self, len(self.nodes), op, parents, output, backward_fn)
        self.nodes.append(node)
        return node


def active_tape():
    return _ACTIVE_TAPE.get()


class Tensor(object):
    """Row-major float64 matrix with an optional tape node.

    The values array is never mutated by ops; ``grad`` is filled in by
    ``backward``.
    """

    __slots__ = ('values', 'requires_grad', 'node', 'grad', 'name')

    def __init__(self, values, requires_grad=False, name=None, node=None):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim == 0:
            arr = arr.reshape(1, 1)
        if arr.ndim != 2:
            raise DimensionError("tensors are 2-D", arr.shape)
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.node = node
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]

    def item(self):
        if self.values.shape != (1, 1):
            raise ContractError("item() needs a 1x1 tensor, got {}".format(self.values.shape))
        return float(self.values[0, 0])

    def numpy(self):
        return self.values

    def __repr__(self):
        label = " name={}".format(self.name) if self.name else ""
        return "Tensor(shape={}{}{})".format(self.shape, label, " grad" if self.requires_grad else "")


def make_result(op, values, parents, backward_fn):
    """Wrap an op output and record it when a tape is active and a parent needs gradients."""
    tape = active_tape()
    needs_grad = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor(values, requires_grad=needs_grad)
    if needs_grad:
        out.node = tape.record(op, tuple(parents), out, backward_fn)
    return out


def stop_gradient(x):
    """Same values as ``x``, detached from the tape."""
    return Tensor(x.values, requires_grad=False, name=x.name)


def constant(values, name=None):
    return Tensor(values, requires_grad=False, name=name)


def parameter(values, name=None):
    return Tensor(values, requires_grad=True, name=name)


def backward(loss):
    """Reverse sweep from a 1x1 loss; returns {tensor: gradient} for every tensor reached."""
    if loss.shape != (1, 1):
        raise ContractError("backward() needs a scalar (1x1) loss, got shape {}".format(loss.shape))
    if loss.node is None:
        raise ContractError("loss is not on a tape (was it computed inside 'with Tape()'?)")

    nodes = loss.node.tape.nodes[:loss.node.index + 1]

    grads = {id(loss): np.ones((1, 1))}
    reached = {id(loss): loss}
    for node in reversed(nodes):
        g = grads.get(id(node.output))
        if g is None:
            continue
        parent_grads = node.backward_fn(g)
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                raise DimensionError("gradient shape mismatch in '{}'".format(node.op), pg.shape, parent.shape)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
                reached[key] = parent

    result = {}
    for key, tensor in reached.items():
        tensor.grad = grads[key]
        result[tensor] = grads[key]
    return result
