"""
Central finite-difference verification of analytic gradients.
"""
import numpy as np

from chronotrack.autodiff.graph import Graph


def _evaluate(closure, inputs):
    graph = Graph(inputs, record=False)
    tensors = {name: graph.param(name) for name in inputs}
    return float(closure(graph, tensors).item())


def analytic_gradients(closure, inputs):
    graph = Graph(inputs)
    tensors = {name: graph.param(name) for name in inputs}
    return graph.backward(closure(graph, tensors))


def grad_check(closure, inputs, step=1e-5, floor=1e-8, exclude=None, entries=None, seed=0):
    """
    Largest ``|analytic - central| / max(|analytic|, |central|, floor)`` over the
    checked input entries.

    ``closure(graph, tensors)`` maps a dict of leaf tensors to a scalar tensor.
    ``exclude(name, array)`` may return a boolean mask of entries to skip (kinks);
    ``entries`` limits the check to that many randomly chosen entries per input.
    """
    if step <= 0:
        raise ValueError('step must be positive')
    inputs = {name: np.array(value, dtype=np.float64) for name, value in inputs.items()}
    analytic = analytic_gradients(closure, inputs)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, array in inputs.items():
        flat = array.reshape(-1)
        candidates = np.arange(flat.size)
        if exclude is not None:
            skipped = np.asarray(exclude(name, array), dtype=bool).reshape(-1)
            candidates = candidates[~skipped]
        if entries is not None and candidates.size > entries:
            candidates = np.sort(rng.choice(candidates, size=entries, replace=False))
        grad = analytic[name].reshape(-1)
        for index in candidates:
            original = flat[index]
            flat[index] = original + step
            plus = _evaluate(closure, inputs)
            flat[index] = original - step
            minus = _evaluate(closure, inputs)
            flat[index] = original
            central = (plus - minus) / (2.0 * step)
            error = abs(grad[index] - central) / max(abs(grad[index]), abs(central), floor)
            worst = max(worst, error)
    return worst
