"""
Optimisation loop: per-sample forward/backward on its own graph, gradient
averaging at the step barrier, one Adam update per step.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from chronotrack.autodiff.graph import Graph
from chronotrack.exceptions import NonFiniteError
from chronotrack.model import build_parameters
from chronotrack.objectives import average_breakdowns
from chronotrack.training.optim import Adam, AdamState, clip_gradients, epoch_of, learning_rate
from chronotrack.training.window import prepare_window, sample_window, window_forward
from chronotrack.utils import derive_seed


logger = logging.getLogger(__name__)


@dataclass
class TrainState:
    params: Dict[str, np.ndarray]
    optimizer: AdamState
    history: List[dict] = field(default_factory=list)

    @property
    def step(self):
        return self.optimizer.step


def sample_gradients(window, params, tracker_config, train_config):
    graph = Graph(params)
    try:
        breakdown = window_forward(graph, window, tracker_config, train_config)
    except NonFiniteError as error:
        logger.error('non-finite value from %s at node %s (window %s@%d)', error.op, error.node_id, window.name,
                     window.start)
        raise
    grads = graph.backward(breakdown.total)
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            logger.error('non-finite gradient for %s (window %s@%d)', name, window.name, window.start)
            raise NonFiniteError('backward:%s' % name, None)
    return breakdown, grads


def train_step(windows, params, optimizer_state, tracker_config, train_config, optimizer=None, lr=None):
    """
    One optimisation step over ``windows`` (one prepared window or a batch).
    Returns ``(LossBreakdown, params, optimizer_state)``; the breakdown is the
    batch mean.
    """
    if not isinstance(windows, (list, tuple)):
        windows = [windows]
    optimizer = optimizer or Adam.from_config(train_config)
    if lr is None:
        lr = learning_rate(train_config, epoch_of(optimizer_state.step, train_config))

    def run(window):
        return sample_gradients(window, params, tracker_config, train_config)

    if train_config.workers > 1 and len(windows) > 1:
        with ThreadPoolExecutor(max_workers=train_config.workers) as pool:
            results = list(pool.map(run, windows))
    else:
        results = [run(window) for window in windows]

    grads = {name: sum(result[1][name] for result in results) / len(results) for name in params}
    grads = clip_gradients(grads, train_config.max_grad_norm)
    params, optimizer_state = optimizer.update(params, grads, optimizer_state, lr)
    return average_breakdowns([result[0] for result in results]), params, optimizer_state


def batch_for_step(dataset, step, tracker_config, train_config):
    windows = []
    for index in range(train_config.batch_size):
        seed = derive_seed(train_config.seed, 'step', step, index)
        sample = sample_window(dataset, train_config.window, seed)
        windows.append(prepare_window(sample, tracker_config, train_config, seed))
    return windows


def initial_state(tracker_config, train_config, params=None):
    params = params if params is not None else build_parameters(tracker_config, train_config.seed)
    return TrainState(params, Adam.from_config(train_config).init(params))


def train(dataset, tracker_config, train_config, state=None, steps=None, callback=None):
    """
    Run from ``state`` (fresh parameters when omitted) until the configured
    ``epochs * steps_per_epoch`` or for ``steps`` more steps. Windows and jitter
    depend only on the seed and the global step, so a resumed run replays the
    same batches.
    """
    state = state or initial_state(tracker_config, train_config)
    optimizer = Adam.from_config(train_config)
    total = train_config.epochs * train_config.steps_per_epoch
    stop = total if steps is None else min(total, state.step + steps)
    while state.step < stop:
        step = state.step
        epoch = epoch_of(step, train_config)
        lr = learning_rate(train_config, epoch)
        windows = batch_for_step(dataset, step, tracker_config, train_config)
        breakdown, params, optimizer_state = train_step(windows, state.params, state.optimizer, tracker_config,
                                                        train_config, optimizer=optimizer, lr=lr)
        record = dict(breakdown.as_dict(), step=step + 1, epoch=epoch, lr=lr)
        state = TrainState(params, optimizer_state, state.history + [record])
        logger.info('step %d epoch %d lr %.2e total %.5f dec %.5f tc %.5f mcc %.5f', step + 1, epoch, lr,
                    record['total'], record['dec'], record['tc'], record['mcc'])
        if callback is not None:
            callback(state)
    return state
