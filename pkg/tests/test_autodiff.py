import unittest

import numpy as np

from chronotrack.autodiff import nn, ops
from chronotrack.autodiff.gradcheck import grad_check
from chronotrack.autodiff.graph import Graph, Tensor, constant
from chronotrack.exceptions import EmptyKeysError, GraphConsumedError, NonFiniteError, NotScalarError, ShapeError
from tests.utils.context_managers import SettingsOverride


LIMIT = 1e-4


def away_from_zero(limit=1e-3):
    def exclude(name, array):
        return np.abs(array) < limit
    return exclude


class OperationGradientTests(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(0)

    def check(self, closure, limit=LIMIT, **inputs):
        worst = grad_check(closure, inputs, floor=1e-6)
        self.assertLess(worst, limit)

    def weights(self, *shape):
        return np.arange(1.0, 1.0 + np.prod(shape)).reshape(shape) / np.prod(shape)

    def test_elementwise(self):
        a, b = self.rng.normal(size=(3, 4)), self.rng.uniform(0.5, 2.0, (3, 4))
        w = self.weights(3, 4)
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.add(t['a'], t['b']), w)), a=a, b=b)
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.sub(t['a'], t['b']), w)), a=a, b=b)
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.mul(t['a'], t['b']), w)), a=a, b=b)
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.div(t['a'], t['b']), w)), a=a, b=b)
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.neg(ops.scale(t['a'], 3.0)), w)), a=a)

    def test_broadcasting(self):
        a, row = self.rng.normal(size=(3, 4)), self.rng.normal(size=(4,))
        w = self.weights(3, 4)
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.add(t['a'], t['row']), w)), a=a, row=row)
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.mul(t['a'], t['row']), w)), a=a, row=row)

    def test_matmul_and_shapes(self):
        a, b = self.rng.normal(size=(3, 5)), self.rng.normal(size=(5, 2))
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.matmul(t['a'], t['b']), self.weights(3, 2))), a=a, b=b)
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.transpose(t['a']), self.weights(5, 3))), a=a)
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.reshape(t['a'], (5, 3)), self.weights(5, 3))), a=a)
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.columns(t['a'], 1, 4), self.weights(3, 3))), a=a)

    def test_concat_and_gather(self):
        a, b = self.rng.normal(size=(3, 2)), self.rng.normal(size=(3, 4))
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.concat([t['a'], t['b']], axis=1), self.weights(3, 6))),
                   a=a, b=b)
        index = np.array([[0, 2], [2, 2], [1, 0]])
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.gather_rows(t['b'], index), self.weights(3, 2, 4))), b=b)

    def test_reductions(self):
        x = self.rng.normal(size=(4, 3, 5))
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.sum_reduce(t['x'], axis=1), self.weights(4, 5))), x=x)
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.mean_reduce(t['x'], axis=2, keepdims=True),
                                                       self.weights(4, 3, 1))), x=x)
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.max_reduce(t['x'], axis=1), self.weights(4, 5))), x=x)

    def test_activations(self):
        x = self.rng.normal(size=(4, 5))
        w = self.weights(4, 5)
        exclude = away_from_zero()
        for op in (ops.relu, ops.leaky_relu, ops.sigmoid):
            worst = grad_check(lambda g, t: ops.sum_reduce(ops.mul(op(t['x']), w)), {'x': x}, floor=1e-6,
                               exclude=exclude)
            self.assertLess(worst, LIMIT, op.__name__)
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.log(t['x']), w)), x=np.abs(x) + 0.1)

    def test_softmax(self):
        x = self.rng.normal(size=(3, 6))
        for temperature in (1.0, 0.1):
            self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.softmax(t['x'], temperature=temperature),
                                                           self.weights(3, 6))), x=x)
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.softmax(t['x'], axis=0), self.weights(3, 6))), x=x)

    def test_layers(self):
        x, weight, bias = self.rng.normal(size=(5, 3)), self.rng.normal(size=(3, 4)), self.rng.normal(size=(4,))
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.linear(t['x'], t['weight'], t['bias']),
                                                       self.weights(5, 4))), x=x, weight=weight, bias=bias)
        gain, shift = self.rng.normal(size=(3,)), self.rng.normal(size=(3,))
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.layer_norm(t['x'], t['gain'], t['shift']),
                                                       self.weights(5, 3))), x=x, gain=gain, shift=shift)
        other = self.rng.normal(size=(4, 3))
        self.check(lambda g, t: ops.sum_reduce(ops.mul(ops.cosine_similarity(t['x'], t['other']),
                                                       self.weights(5, 4))), x=x, other=other)

    def test_losses(self):
        diff = self.rng.normal(size=(6,)) * 2.0
        worst = grad_check(lambda g, t: ops.sum_reduce(ops.smooth_l1(t['diff'])), {'diff': diff}, floor=1e-6,
                           exclude=lambda name, array: np.abs(np.abs(array) - 1.0) < 1e-3)
        self.assertLess(worst, LIMIT)
        a, b = self.rng.normal(size=(3,)), self.rng.normal(size=(3,))
        self.check(lambda g, t: ops.squared_error(t['a'], b), a=a)
        self.check(lambda g, t: ops.squared_error(t['a'], b, reduction='mean'), a=a)
        probs = self.rng.uniform(0.1, 1.0, (4, 3))
        probs /= probs.sum(axis=1, keepdims=True)
        self.check(lambda g, t: ops.cross_entropy(t['probs'], np.array([0, 2, 1, 1])), probs=probs)
        scores = self.rng.uniform(0.05, 0.95, 7)
        targets = (self.rng.random(7) < 0.5).astype(float)
        self.check(lambda g, t: ops.binary_cross_entropy(t['scores'], targets), scores=scores)


class GraphTests(unittest.TestCase):

    def test_backward_gives_zeros_for_unreached_parameters(self):
        graph = Graph({'used': np.ones((2, 2)), 'unused': np.ones(3)})
        loss = ops.sum_reduce(ops.scale(graph.param('used'), 2.0))
        grads = graph.backward(loss)
        np.testing.assert_array_equal(grads['used'], np.full((2, 2), 2.0))
        np.testing.assert_array_equal(grads['unused'], np.zeros(3))

    def test_shared_leaf_accumulates(self):
        graph = Graph({'x': np.array([1.0, 2.0])})
        x = graph.param('x')
        self.assertIs(graph.param('x'), x)
        grads = graph.backward(ops.sum_reduce(ops.mul(x, x)))
        np.testing.assert_allclose(grads['x'], [2.0, 4.0])

    def test_backward_consumes_the_graph(self):
        graph = Graph({'x': np.ones(2)})
        x = graph.param('x')
        loss = ops.sum_reduce(x)
        graph.backward(loss)
        with self.assertRaises(GraphConsumedError):
            graph.backward(loss)
        with self.assertRaises(GraphConsumedError):
            ops.mul(x, x)

    def test_backward_needs_a_scalar(self):
        graph = Graph({'x': np.ones(2)})
        with self.assertRaises(NotScalarError):
            graph.backward(ops.scale(graph.param('x'), 2.0))

    def test_non_recording_graph_keeps_no_tape(self):
        graph = Graph({'x': np.ones((2, 2))}, record=False)
        result = ops.matmul(graph.param('x'), graph.param('x'))
        np.testing.assert_array_equal(result.value, np.full((2, 2), 2.0))
        self.assertEqual(len(graph), 0)
        self.assertFalse(result.requires_grad)

    def test_operator_overloads(self):
        graph = Graph({'x': np.array([1.0, -2.0])})
        x = graph.param('x')
        grads = graph.backward(((x * 3.0 - 1.0) / 2.0).sum())
        np.testing.assert_allclose(grads['x'], [1.5, 1.5])

    def test_shape_errors(self):
        with self.assertRaises(ShapeError):
            ops.matmul(constant(np.ones((2, 3))), constant(np.ones((2, 3))))
        with self.assertRaises(ShapeError):
            ops.add(constant(np.ones((2, 3))), constant(np.ones((3, 2))))
        with self.assertRaises(ShapeError):
            ops.gather_rows(constant(np.ones((2, 3))), [0, 5])

    def test_non_finite_values_raise(self):
        with self.assertRaises(NonFiniteError) as caught:
            with np.errstate(divide='ignore'):
                ops.log(constant(np.array([1.0, 0.0])))
        self.assertEqual(caught.exception.op, 'log')
        with SettingsOverride(CHECK_FINITE=False):
            with np.errstate(divide='ignore'):
                result = ops.log(constant(np.array([0.0])))
        self.assertTrue(np.isneginf(result.value[0]))

    def test_non_finite_error_names_the_op_without_recording(self):
        graph = Graph({'w': np.array([1.0, 0.0])}, record=False)
        doubled = ops.scale(graph.param('w'), 2.0)
        with self.assertRaises(NonFiniteError) as caught:
            with np.errstate(divide='ignore'):
                ops.log(doubled)
        self.assertEqual(caught.exception.op, 'log')
        self.assertEqual(caught.exception.node_id, 1)
        self.assertIn('node 1', str(caught.exception))

    def test_tensor_wraps_plain_values(self):
        tensor = constant([1, 2, 3])
        self.assertIsInstance(tensor, Tensor)
        self.assertEqual(tensor.value.dtype, np.float64)
        self.assertIs(constant(tensor), tensor)


class AttentionTests(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(4)
        self.params = {}
        nn.init_transformer_stack(self.params, 'stack', 4, 2, self.rng)

    def test_attention_needs_keys(self):
        graph = Graph(self.params)
        with self.assertRaises(EmptyKeysError):
            nn.attention(graph, 'stack.layer0.cross', constant(np.ones((2, 4))), constant(np.zeros((0, 4))), 2)

    def test_attention_weights_are_distributions(self):
        graph = Graph(self.params, record=False)
        output, weights = nn.attention(graph, 'stack.layer0.cross', constant(self.rng.normal(size=(3, 4))),
                                       constant(self.rng.normal(size=(5, 4))), 2)
        self.assertEqual(output.shape, (3, 4))
        self.assertEqual(len(weights), 2)
        for head in weights:
            np.testing.assert_allclose(head.value.sum(axis=1), np.ones(3))

    def test_transformer_stack_keeps_query_shape(self):
        graph = Graph(self.params, record=False)
        trace = []
        output = nn.transformer_stack(graph, 'stack', constant(self.rng.normal(size=(3, 4))),
                                      constant(self.rng.normal(size=(7, 4))), 2, 2, trace=trace)
        self.assertEqual(output.shape, (3, 4))
        self.assertEqual(len(trace), 2)

    def test_transformer_stack_gradients(self):
        inputs = dict(self.params, queries=self.rng.normal(size=(3, 4)), memory=self.rng.normal(size=(5, 4)))
        weights = np.arange(12.0).reshape(3, 4) / 12.0

        def closure(graph, tensors):
            out = nn.transformer_stack(graph, 'stack', tensors['queries'], tensors['memory'], 2, 2)
            return ops.sum_reduce(ops.mul(out, weights))
        self.assertLess(grad_check(closure, inputs, floor=1e-6, entries=3), 1e-3)
