"""
Parameter initialisers and the attention building blocks shared by the memory
updater and the feature refiner.

Parameters live in a plain ``dict`` of arrays keyed by dotted names
(``mu.layer0.cross.query.weight``); the functions below read them through
``graph.param`` so one set of arrays can feed any number of graphs.
"""
import math

import numpy as np

from chronotrack.autodiff import ops
from chronotrack.exceptions import EmptyKeysError, ShapeError
from chronotrack.utils import float_dtype


def init_linear(params, name, fan_in, fan_out, rng, bias=True, gain=1.0):
    limit = gain * math.sqrt(6.0 / (fan_in + fan_out))
    params[name + '.weight'] = rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(float_dtype())
    if bias:
        params[name + '.bias'] = np.zeros(fan_out, dtype=float_dtype())


def init_layer_norm(params, name, width):
    params[name + '.gain'] = np.ones(width, dtype=float_dtype())
    params[name + '.bias'] = np.zeros(width, dtype=float_dtype())


def linear(graph, name, x, bias=True):
    return ops.linear(x, graph.param(name + '.weight'), graph.param(name + '.bias') if bias else None)


def layer_norm(graph, name, x):
    return ops.layer_norm(x, graph.param(name + '.gain'), graph.param(name + '.bias'))


def init_attention(params, name, width, rng):
    for part in ('query', 'key', 'value', 'out'):
        init_linear(params, '%s.%s' % (name, part), width, width, rng)


def attention(graph, name, queries, keys_values, heads):
    """
    Multi-head scaled dot-product attention. Returns the n x D output and the
    per-head n x m attention weights.
    """
    if keys_values.shape[0] == 0:
        raise EmptyKeysError('%s: attention needs at least one key' % name)
    width = queries.shape[1]
    if keys_values.shape[1] != width or width % heads:
        raise ShapeError(name, queries.shape, keys_values.shape)
    head_width = width // heads
    query = linear(graph, name + '.query', queries)
    key = linear(graph, name + '.key', keys_values)
    value = linear(graph, name + '.value', keys_values)

    outputs, weights = [], []
    for head in range(heads):
        start, stop = head * head_width, (head + 1) * head_width
        scores = ops.matmul(ops.columns(query, start, stop), ops.transpose(ops.columns(key, start, stop)))
        attn = ops.softmax(ops.scale(scores, 1.0 / math.sqrt(head_width)))
        outputs.append(ops.matmul(attn, ops.columns(value, start, stop)))
        weights.append(attn)
    merged = outputs[0] if heads == 1 else ops.concat(outputs, axis=1)
    return linear(graph, name + '.out', merged), weights


def init_transformer_layer(params, name, width, rng, mlp_ratio=2):
    init_layer_norm(params, name + '.cross_norm', width)
    init_layer_norm(params, name + '.memory_norm', width)
    init_attention(params, name + '.cross', width, rng)
    init_layer_norm(params, name + '.self_norm', width)
    init_attention(params, name + '.self', width, rng)
    init_layer_norm(params, name + '.mlp_norm', width)
    init_linear(params, name + '.mlp.hidden', width, mlp_ratio * width, rng)
    init_linear(params, name + '.mlp.out', mlp_ratio * width, width, rng)


def transformer_layer(graph, name, queries, keys_values, heads, trace=None):
    """
    Cross-attention (queries -> keys_values), self-attention among queries, then a
    position-wise MLP; each sub-block is pre-normalised and residual.
    """
    memory = layer_norm(graph, name + '.memory_norm', keys_values)
    crossed, cross_weights = attention(graph, name + '.cross', layer_norm(graph, name + '.cross_norm', queries),
                                       memory, heads)
    x = ops.add(queries, crossed)

    normed = layer_norm(graph, name + '.self_norm', x)
    selfed, _ = attention(graph, name + '.self', normed, normed, heads)
    x = ops.add(x, selfed)

    hidden = ops.relu(linear(graph, name + '.mlp.hidden', layer_norm(graph, name + '.mlp_norm', x)))
    x = ops.add(x, linear(graph, name + '.mlp.out', hidden))
    if trace is not None:
        trace.append(cross_weights)
    return x


def init_transformer_stack(params, name, width, layers, rng, mlp_ratio=2):
    for index in range(layers):
        init_transformer_layer(params, '%s.layer%d' % (name, index), width, rng, mlp_ratio=mlp_ratio)


def transformer_stack(graph, name, queries, keys_values, layers, heads, trace=None):
    x = queries
    for index in range(layers):
        x = transformer_layer(graph, '%s.layer%d' % (name, index), x, keys_values, heads, trace=trace)
    return x
