"""
Tape-based reverse-mode differentiation.

A ``Graph`` is rebuilt for every forward pass. Operations append records to its
tape; ``Graph.backward`` walks the tape once in reverse and hands back one
gradient per registered leaf. Tensors created from a non-recording graph (or
from plain arrays) are constants and carry no node id.
"""
from collections import namedtuple

import numpy as np

from chronotrack.exceptions import ChronoTrackError, GraphConsumedError, NonFiniteError, NotScalarError
from chronotrack.settings import settings
from chronotrack.utils import as_float_array


Record = namedtuple('Record', 'op inputs output backward')


class Tensor:
    __slots__ = ('value', 'graph', 'node')

    def __init__(self, value, graph=None, node=None):
        self.value = value
        self.graph = graph
        self.node = node

    def __repr__(self):
        return 'Tensor(shape=%s, node=%s)' % (self.shape, self.node)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    @property
    def requires_grad(self):
        return self.node is not None

    @property
    def T(self):
        from chronotrack.autodiff import ops
        return ops.transpose(self)

    def item(self):
        return float(self.value.reshape(-1)[0])

    def __add__(self, other):
        from chronotrack.autodiff import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from chronotrack.autodiff import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from chronotrack.autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from chronotrack.autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from chronotrack.autodiff import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from chronotrack.autodiff import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from chronotrack.autodiff import ops
        return ops.div(self, other)

    def __neg__(self):
        from chronotrack.autodiff import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from chronotrack.autodiff import ops
        return ops.matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        from chronotrack.autodiff import ops
        return ops.sum_reduce(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from chronotrack.autodiff import ops
        return ops.mean_reduce(self, axis=axis, keepdims=keepdims)


def constant(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(as_float_array(value))


class Graph:
    """
    Append-only tape plus a registry of named leaves.

    ``parameters`` maps names to arrays and is only read; ``param(name)`` turns an
    entry into a leaf of this graph the first time it is asked for.
    """

    def __init__(self, parameters=None, record=True):
        self.parameters = parameters if parameters is not None else {}
        self.record = record
        self.consumed = False
        self._records = []
        self._shapes = []
        self._leaves = {}
        self._applied = 0

    def __len__(self):
        return len(self._records)

    def _new_node(self, shape):
        self._shapes.append(tuple(shape))
        return len(self._shapes) - 1

    def param(self, name):
        leaf = self._leaves.get(name)
        if leaf is not None:
            return leaf
        try:
            value = self.parameters[name]
        except KeyError:
            raise ChronoTrackError('unknown parameter %r' % name)
        value = as_float_array(value)
        node = self._new_node(value.shape) if self.record else None
        leaf = Tensor(value, self, node)
        self._leaves[name] = leaf
        return leaf

    def constant(self, value):
        return Tensor(as_float_array(value), self, None)

    def apply(self, op, inputs, value, backward):
        """
        Record ``op`` and return its output. A non-finite ``value`` raises
        ``NonFiniteError`` naming the node it would have become; on a
        non-recording graph that is the op's position in the forward pass.
        """
        self._applied += 1
        if settings.CHECK_FINITE and value.size and not np.all(np.isfinite(value)):
            raise NonFiniteError(op, len(self._shapes) if self.record else self._applied - 1)
        nodes = tuple(getattr(tensor, 'node', None) for tensor in inputs)
        if not self.record or all(node is None for node in nodes):
            return Tensor(value, self, None)
        if self.consumed:
            raise GraphConsumedError('graph already consumed by backward')
        node = self._new_node(value.shape)
        self._records.append(Record(op, nodes, node, backward))
        return Tensor(value, self, node)

    def backward(self, loss):
        """
        Gradients of the scalar ``loss`` for every registered leaf and every entry
        of ``parameters``. Leaves the loss does not reach get zeros.
        """
        if self.consumed:
            raise GraphConsumedError('backward already called on this graph')
        if loss.size != 1:
            raise NotScalarError(loss.shape)
        self.consumed = True
        grads = {}
        if loss.node is not None:
            grads[loss.node] = np.ones(loss.shape, dtype=loss.value.dtype)
        for record in reversed(self._records):
            grad = grads.pop(record.output, None)
            if grad is None:
                continue
            input_grads = record.backward(grad)
            for node, input_grad in zip(record.inputs, input_grads):
                if node is None or input_grad is None:
                    continue
                if node in grads:
                    grads[node] = grads[node] + input_grad
                else:
                    grads[node] = input_grad
        self._records = []

        result = {}
        for name, value in self.parameters.items():
            leaf = self._leaves.get(name)
            shape = np.shape(value)
            grad = grads.get(leaf.node) if leaf is not None and leaf.node is not None else None
            if grad is None:
                grad = np.zeros(shape, dtype=np.result_type(np.asarray(value).dtype, float))
            result[name] = np.asarray(grad).reshape(shape)
        return result


def graph_of(*tensors):
    for tensor in tensors:
        graph = getattr(tensor, 'graph', None)
        if graph is not None:
            return graph
    return None


def apply_op(op, inputs, value, backward):
    graph = graph_of(*inputs)
    if graph is None:
        if settings.CHECK_FINITE and value.size and not np.all(np.isfinite(value)):
            raise NonFiniteError(op, None)
        return Tensor(value)
    return graph.apply(op, inputs, value, backward)
