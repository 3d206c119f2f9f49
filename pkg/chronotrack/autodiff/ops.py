"""
Differentiable primitives. Every function takes ``Tensor`` (or array-like)
inputs, computes the forward value with numpy and records an exact local
gradient rule on the owning graph.
"""
import numpy as np

from chronotrack.autodiff.graph import Tensor, apply_op, constant
from chronotrack.exceptions import ShapeError


def _unbroadcast(grad, shape):
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape)


def _require_matrix(op, *tensors):
    for tensor in tensors:
        if tensor.ndim != 2:
            raise ShapeError(op, *(t.shape for t in tensors))


# elementwise arithmetic

def add(a, b):
    a, b = constant(a), constant(b)
    _broadcast_shape('add', a, b)

    def backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)
    return apply_op('add', (a, b), a.value + b.value, backward)


def sub(a, b):
    a, b = constant(a), constant(b)
    _broadcast_shape('sub', a, b)

    def backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)
    return apply_op('sub', (a, b), a.value - b.value, backward)


def mul(a, b):
    a, b = constant(a), constant(b)
    _broadcast_shape('mul', a, b)

    def backward(grad):
        return _unbroadcast(grad * b.value, a.shape), _unbroadcast(grad * a.value, b.shape)
    return apply_op('mul', (a, b), a.value * b.value, backward)


def div(a, b):
    a, b = constant(a), constant(b)
    _broadcast_shape('div', a, b)
    with np.errstate(divide='ignore', invalid='ignore'):
        value = a.value / b.value

    def backward(grad):
        return (_unbroadcast(grad / b.value, a.shape),
                _unbroadcast(-grad * a.value / (b.value * b.value), b.shape))
    return apply_op('div', (a, b), value, backward)


def scale(x, factor):
    x = constant(x)
    factor = float(factor)

    def backward(grad):
        return (grad * factor,)
    return apply_op('scale', (x,), x.value * factor, backward)


def neg(x):
    return scale(x, -1.0)


# shape manipulation

def matmul(a, b):
    a, b = constant(a), constant(b)
    _require_matrix('matmul', a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError('matmul', a.shape, b.shape)

    def backward(grad):
        return grad @ b.value.T, a.value.T @ grad
    return apply_op('matmul', (a, b), a.value @ b.value, backward)


def transpose(x):
    x = constant(x)
    _require_matrix('transpose', x)

    def backward(grad):
        return (grad.T,)
    return apply_op('transpose', (x,), x.value.T.copy(), backward)


def reshape(x, shape):
    x = constant(x)
    try:
        value = x.value.reshape(shape)
    except ValueError:
        raise ShapeError('reshape', x.shape, shape)

    def backward(grad):
        return (grad.reshape(x.shape),)
    return apply_op('reshape', (x,), value, backward)


def concat(tensors, axis=0):
    tensors = [constant(t) for t in tensors]
    reference = tensors[0]
    for tensor in tensors[1:]:
        if tensor.ndim != reference.ndim or any(
                tensor.shape[i] != reference.shape[i] for i in range(reference.ndim) if i != axis % reference.ndim):
            raise ShapeError('concat', *(t.shape for t in tensors))
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(grad):
        return tuple(np.split(grad, bounds, axis=axis))
    return apply_op('concat', tuple(tensors), np.concatenate([t.value for t in tensors], axis=axis), backward)


def columns(x, start, stop):
    x = constant(x)
    _require_matrix('columns', x)
    if not 0 <= start <= stop <= x.shape[1]:
        raise ShapeError('columns', x.shape, (start, stop))

    def backward(grad):
        full = np.zeros(x.shape, dtype=grad.dtype)
        full[:, start:stop] = grad
        return (full,)
    return apply_op('columns', (x,), x.value[:, start:stop].copy(), backward)


def gather_rows(x, index):
    """
    ``x[index]`` for an integer index array of any shape; the result has shape
    ``index.shape + x.shape[1:]``.
    """
    x = constant(x)
    index = np.asarray(index, dtype=np.intp)
    if index.size and (index.min() < -x.shape[0] or index.max() >= x.shape[0]):
        raise ShapeError('gather_rows', x.shape, index.shape)

    def backward(grad):
        full = np.zeros(x.shape, dtype=grad.dtype)
        np.add.at(full, index, grad)
        return (full,)
    return apply_op('gather_rows', (x,), x.value[index], backward)


# reductions

def sum_reduce(x, axis=None, keepdims=False):
    x = constant(x)
    value = np.asarray(x.value.sum(axis=axis, keepdims=keepdims))

    def backward(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, x.shape).copy(),)
    return apply_op('sum', (x,), value, backward)


def mean_reduce(x, axis=None, keepdims=False):
    x = constant(x)
    count = x.size if axis is None else x.shape[axis]
    if count == 0:
        raise ShapeError('mean', x.shape)
    return scale(sum_reduce(x, axis=axis, keepdims=keepdims), 1.0 / count)


def max_reduce(x, axis):
    x = constant(x)
    if x.shape[axis] == 0:
        raise ShapeError('max', x.shape)
    winners = np.expand_dims(np.argmax(x.value, axis=axis), axis)
    value = np.take_along_axis(x.value, winners, axis=axis).squeeze(axis)

    def backward(grad):
        full = np.zeros(x.shape, dtype=grad.dtype)
        np.put_along_axis(full, winners, np.expand_dims(grad, axis), axis=axis)
        return (full,)
    return apply_op('max', (x,), value, backward)


# nonlinearities

def relu(x):
    return leaky_relu(x, 0.0)


def leaky_relu(x, slope=0.2):
    x = constant(x)
    factor = np.where(x.value > 0, 1.0, slope)

    def backward(grad):
        return (grad * factor,)
    return apply_op('leaky_relu', (x,), x.value * factor, backward)


def sigmoid(x):
    x = constant(x)
    value = np.empty_like(x.value)
    positive = x.value >= 0
    value[positive] = 1.0 / (1.0 + np.exp(-x.value[positive]))
    exp_x = np.exp(x.value[~positive])
    value[~positive] = exp_x / (1.0 + exp_x)

    def backward(grad):
        return (grad * value * (1.0 - value),)
    return apply_op('sigmoid', (x,), value, backward)


def log(x):
    x = constant(x)
    with np.errstate(divide='ignore', invalid='ignore'):
        value = np.log(x.value)

    def backward(grad):
        return (grad / x.value,)
    return apply_op('log', (x,), value, backward)


def softmax(x, temperature=1.0, axis=-1):
    """
    Softmax of ``x / temperature`` along ``axis``.
    """
    x = constant(x)
    if x.shape[axis] == 0:
        raise ShapeError('softmax', x.shape)
    logits = x.value / temperature
    shifted = np.exp(logits - logits.max(axis=axis, keepdims=True))
    value = shifted / shifted.sum(axis=axis, keepdims=True)

    def backward(grad):
        inner = (grad * value).sum(axis=axis, keepdims=True)
        return (value * (grad - inner) / temperature,)
    return apply_op('softmax', (x,), value, backward)


# layers

def linear(x, weight, bias=None):
    x, weight = constant(x), constant(weight)
    _require_matrix('linear', x, weight)
    if x.shape[1] != weight.shape[0]:
        raise ShapeError('linear', x.shape, weight.shape)
    inputs = (x, weight)
    value = x.value @ weight.value
    if bias is not None:
        bias = constant(bias)
        if bias.shape != (weight.shape[1],):
            raise ShapeError('linear', weight.shape, bias.shape)
        inputs = inputs + (bias,)
        value = value + bias.value

    def backward(grad):
        grads = (grad @ weight.value.T, x.value.T @ grad)
        if bias is not None:
            grads = grads + (grad.sum(axis=0),)
        return grads
    return apply_op('linear', inputs, value, backward)


def layer_norm(x, gain, bias, eps=1e-5):
    x, gain, bias = constant(x), constant(gain), constant(bias)
    width = x.shape[-1]
    if gain.shape != (width,) or bias.shape != (width,):
        raise ShapeError('layer_norm', x.shape, gain.shape, bias.shape)
    mean = x.value.mean(axis=-1, keepdims=True)
    centered = x.value - mean
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    normed = centered * inv_std
    value = normed * gain.value + bias.value

    def backward(grad):
        grad_normed = grad * gain.value
        grad_x = inv_std * (grad_normed - grad_normed.mean(axis=-1, keepdims=True)
                            - normed * (grad_normed * normed).mean(axis=-1, keepdims=True))
        rows = grad.reshape(-1, width)
        return grad_x, (rows * normed.reshape(-1, width)).sum(axis=0), rows.sum(axis=0)
    return apply_op('layer_norm', (x, gain, bias), value, backward)


def cosine_similarity(a, b, eps=1e-8):
    """
    Pairwise cosine similarity between the rows of ``a`` (n x D) and ``b`` (m x D),
    with ``eps`` added to every norm.
    """
    a, b = constant(a), constant(b)
    _require_matrix('cosine_similarity', a, b)
    if a.shape[1] != b.shape[1]:
        raise ShapeError('cosine_similarity', a.shape, b.shape)
    norm_a = np.sqrt((a.value * a.value).sum(axis=1, keepdims=True))
    norm_b = np.sqrt((b.value * b.value).sum(axis=1, keepdims=True))
    unit_a = a.value / (norm_a + eps)
    unit_b = b.value / (norm_b + eps)

    def _through_norm(grad_unit, raw, norm):
        guarded = np.where(norm > 0, norm, 1.0)
        radial = (grad_unit * raw).sum(axis=1, keepdims=True) / ((norm + eps) ** 2 * guarded)
        return grad_unit / (norm + eps) - raw * np.where(norm > 0, radial, 0.0)

    def backward(grad):
        return (_through_norm(grad @ unit_b, a.value, norm_a),
                _through_norm(grad.T @ unit_a, b.value, norm_b))
    return apply_op('cosine_similarity', (a, b), unit_a @ unit_b.T, backward)


# losses

def smooth_l1(diff, beta=1.0):
    """
    Elementwise smooth-L1: ``0.5 d^2 / beta`` inside ``|d| < beta``, ``|d| - 0.5 beta`` outside.
    """
    diff = constant(diff)
    magnitude = np.abs(diff.value)
    inside = magnitude < beta
    value = np.where(inside, 0.5 * diff.value * diff.value / beta, magnitude - 0.5 * beta)

    def backward(grad):
        return (grad * np.where(inside, diff.value / beta, np.sign(diff.value)),)
    return apply_op('smooth_l1', (diff,), value, backward)


def squared_error(a, b, reduction='sum'):
    delta = sub(a, b)
    squared = mul(delta, delta)
    if reduction == 'sum':
        return sum_reduce(squared)
    return mean_reduce(squared)


def cross_entropy(probs, targets):
    """
    Mean over rows of ``-log probs[i, targets[i]]``; rows are probability vectors.
    """
    probs = constant(probs)
    _require_matrix('cross_entropy', probs)
    targets = np.asarray(targets, dtype=np.intp)
    if targets.shape != (probs.shape[0],):
        raise ShapeError('cross_entropy', probs.shape, targets.shape)
    rows = np.arange(probs.shape[0])
    picked = probs.value[rows, targets]
    with np.errstate(divide='ignore'):
        value = np.asarray(-np.log(picked).mean())

    def backward(grad):
        full = np.zeros(probs.shape, dtype=probs.value.dtype)
        full[rows, targets] = -grad / (picked * probs.shape[0])
        return (full,)
    return apply_op('cross_entropy', (probs,), value, backward)


def binary_cross_entropy(probs, targets, clamp=1e-7):
    probs = constant(probs)
    targets = np.asarray(targets, dtype=probs.value.dtype)
    if targets.shape != probs.shape:
        raise ShapeError('binary_cross_entropy', probs.shape, targets.shape)
    clipped = np.clip(probs.value, clamp, 1.0 - clamp)
    free = (probs.value > clamp) & (probs.value < 1.0 - clamp)
    count = max(probs.size, 1)
    value = np.asarray(-(targets * np.log(clipped) + (1.0 - targets) * np.log(1.0 - clipped)).sum() / count)

    def backward(grad):
        local = (clipped - targets) / (clipped * (1.0 - clipped)) / count
        return (grad * np.where(free, local, 0.0),)
    return apply_op('binary_cross_entropy', (probs,), value, backward)
