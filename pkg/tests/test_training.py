import dataclasses
import os
import shutil
import tempfile
import unittest

import numpy as np

from chronotrack.autodiff.gradcheck import grad_check
from chronotrack.autodiff.graph import Graph
from chronotrack.data.synth import GeneratorSpec, generate_sequence
from chronotrack.exceptions import CheckpointError, CheckpointMismatchError, NoEligibleSequenceError
from chronotrack.geometry import Box3D
from chronotrack.model import build_parameters
from chronotrack.training.checkpoint import check_compatible, load_checkpoint, read_arrays, save_checkpoint
from chronotrack.training.loop import TrainState, batch_for_step, initial_state, train, train_step
from chronotrack.training.optim import Adam, clip_gradients, global_norm, learning_rate
from chronotrack.training.window import first_frame_mask, prepare_window, sample_window, window_forward
from tests.settings import MICRO_TRACKER, MICRO_TRAIN
from tests.utils.context_managers import SilencedLogging


def micro_dataset():
    return [generate_sequence(GeneratorSpec(archetype=archetype, frames=frames, target_points=60, seed=seed,
                                            waypoints=((0.0, 0.0, 0.0), (2.0, 0.5, 0.3))))
            for seed, (archetype, frames) in enumerate((('car-shell', 5), ('pedestrian-cylinders', 4)))]


class WindowTests(unittest.TestCase):

    def setUp(self):
        self.dataset = micro_dataset()

    def test_sample_window(self):
        for seed in range(10):
            sample = sample_window(self.dataset, 5, seed)
            self.assertEqual(sample.name, self.dataset[0].name)
            self.assertEqual(sample.start, 0)
            self.assertEqual(len(sample), 5)
        starts = {sample_window(self.dataset, 3, seed).start for seed in range(40)}
        self.assertLessEqual(starts, {0, 1, 2})
        sample = sample_window(self.dataset, 3, 7)
        source = next(s for s in self.dataset if s.name == sample.name)
        self.assertEqual(sample.frames, source.frames[sample.start:sample.start + 3])

    def test_offsets_are_uniform(self):
        dataset = [generate_sequence(GeneratorSpec(frames=10, target_points=20, seed=9))]
        counts = np.zeros(3)
        for seed in range(10000):
            counts[sample_window(dataset, 8, seed).start] += 1
        np.testing.assert_allclose(counts / 10000.0, 1.0 / 3.0, atol=0.03)

    def test_no_eligible_sequence(self):
        with self.assertRaises(NoEligibleSequenceError):
            sample_window(self.dataset, 6, 0)

    def test_prepare_window(self):
        sample = sample_window(self.dataset, 3, 1)
        window = prepare_window(sample, MICRO_TRACKER, MICRO_TRAIN, 1)
        self.assertEqual(len(window.frames), 3)
        self.assertEqual(window.frames[0].reference, sample.frames[0].gt_box)
        for frame in window.frames:
            self.assertEqual(frame.points.shape, (MICRO_TRACKER.num_points, 3))
        again = prepare_window(sample, MICRO_TRACKER, MICRO_TRAIN, 1)
        np.testing.assert_array_equal(again.frames[2].points, window.frames[2].points)
        self.assertEqual(again.frames[2].reference, window.frames[2].reference)

    def test_unjittered_reference_is_previous_box(self):
        config = dataclasses.replace(MICRO_TRAIN, box_jitter_xy=0.0, box_jitter_heading=0.0)
        sample = sample_window(self.dataset, 3, 2)
        window = prepare_window(sample, MICRO_TRACKER, config, 2)
        self.assertEqual(window.frames[1].reference, sample.frames[0].gt_box)
        self.assertEqual(window.frames[2].reference, sample.frames[1].gt_box)

    def test_first_frame_mask_falls_back_to_nearest_seed(self):
        box = Box3D((0.0, 0.0, 0.0), 0.0, (1.0, 1.0, 1.0))
        seeds = np.array([[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 4.0]])
        with SilencedLogging():
            mask = first_frame_mask(seeds, box, box, 'seq')
        np.testing.assert_array_equal(mask, [False, True, False])
        np.testing.assert_array_equal(first_frame_mask(np.zeros((2, 3)), box, box), [True, True])

    def test_loss_toggles(self):
        params = build_parameters(MICRO_TRACKER)
        window = prepare_window(sample_window(self.dataset, 3, 3), MICRO_TRACKER, MICRO_TRAIN, 3)
        config = dataclasses.replace(MICRO_TRAIN, lambda_m=0.0, lambda_c=0.0, use_tc=False, use_mcc=False)
        with SilencedLogging():
            breakdown = window_forward(Graph(params), window, MICRO_TRACKER, config)
        values = breakdown.as_dict()
        self.assertEqual(values['tc'], 0.0)
        self.assertEqual(values['mcc'], 0.0)
        self.assertAlmostEqual(values['total'], values['bbox'])

        with SilencedLogging():
            full = window_forward(Graph(params), window, MICRO_TRACKER, MICRO_TRAIN).as_dict()
        self.assertAlmostEqual(full['total'], full['dec'] + full['tc'] + full['mcc'])
        self.assertAlmostEqual(full['mcc'], full['cycle'] + full['fg'])
        self.assertGreater(full['cycle'], 0.0)

    def test_total_gradient_is_the_sum_of_its_terms(self):
        params = build_parameters(MICRO_TRACKER, seed=2)
        window = prepare_window(sample_window(self.dataset, 3, 4), MICRO_TRACKER, MICRO_TRAIN, 4)
        grads = {}
        with SilencedLogging():
            for term in ('total', 'dec', 'tc', 'mcc'):
                graph = Graph(params)
                breakdown = window_forward(graph, window, MICRO_TRACKER, MICRO_TRAIN)
                grads[term] = graph.backward(getattr(breakdown, term))
        for name in params:
            np.testing.assert_allclose(grads['total'][name],
                                       grads['dec'][name] + grads['tc'][name] + grads['mcc'][name], atol=1e-10)

    def test_window_gradients(self):
        params = build_parameters(MICRO_TRACKER, seed=1)
        window = prepare_window(sample_window(self.dataset, 3, 0), MICRO_TRACKER, MICRO_TRAIN, 0)

        def closure(graph, tensors):
            return window_forward(graph, window, MICRO_TRACKER, MICRO_TRAIN).total
        with SilencedLogging():
            worst = grad_check(closure, params, floor=1e-6, entries=2)
        self.assertLess(worst, 1e-3)


class OptimizerTests(unittest.TestCase):

    def test_learning_rate_schedule(self):
        config = MICRO_TRAIN
        self.assertAlmostEqual(learning_rate(config, 0), 1e-3)
        self.assertAlmostEqual(learning_rate(config, 14), 1e-3)
        self.assertAlmostEqual(learning_rate(config, 15), 2e-4)
        self.assertAlmostEqual(learning_rate(config, 30), 4e-5)

    def test_first_adam_step(self):
        adam = Adam()
        params = {'w': np.array([1.0, 1.0, 1.0])}
        state = adam.init(params)
        new_params, new_state = adam.update(params, {'w': np.array([2.0, -3.0, 0.0])}, state, 0.1)
        np.testing.assert_allclose(new_params['w'], [0.9, 1.1, 1.0], atol=1e-6)
        np.testing.assert_array_equal(params['w'], [1.0, 1.0, 1.0])
        self.assertEqual(new_state.step, 1)
        self.assertEqual(state.step, 0)

    def test_clip_gradients(self):
        grads = {'a': np.array([3.0]), 'b': np.array([4.0])}
        self.assertAlmostEqual(global_norm(grads), 5.0)
        clipped = clip_gradients(grads, 1.0)
        self.assertAlmostEqual(clipped['a'][0], 0.6)
        self.assertAlmostEqual(clipped['b'][0], 0.8)
        self.assertIs(clip_gradients(grads, 0.0), grads)
        self.assertIs(clip_gradients(grads, 10.0), grads)


class TrainingLoopTests(unittest.TestCase):

    def setUp(self):
        self.dataset = micro_dataset()
        self.tmpdir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmpdir)

    def test_train_records_history(self):
        seen = []
        with SilencedLogging():
            state = train(self.dataset, MICRO_TRACKER, MICRO_TRAIN, steps=2, callback=lambda s: seen.append(s.step))
        self.assertEqual(state.step, 2)
        self.assertEqual(seen, [1, 2])
        self.assertEqual([record['step'] for record in state.history], [1, 2])
        self.assertEqual(state.history[0]['lr'], MICRO_TRAIN.learning_rate)
        for record in state.history:
            self.assertTrue(np.isfinite(record['total']))
        self.assertFalse(np.array_equal(state.params['fg_tokens'], initial_state(MICRO_TRACKER, MICRO_TRAIN)
                                        .params['fg_tokens']))

    def test_parallel_batch_matches_serial(self):
        config = dataclasses.replace(MICRO_TRAIN, batch_size=2)
        state = initial_state(MICRO_TRACKER, config)
        windows = batch_for_step(self.dataset, 0, MICRO_TRACKER, config)
        with SilencedLogging():
            serial = train_step(windows, state.params, state.optimizer, MICRO_TRACKER, config)
            parallel = train_step(windows, state.params, state.optimizer, MICRO_TRACKER,
                                  dataclasses.replace(config, workers=2))
        self.assertEqual(serial[0].as_dict(), parallel[0].as_dict())
        for name in serial[1]:
            np.testing.assert_array_equal(serial[1][name], parallel[1][name])

    def test_resume_replays_the_same_run(self):
        with SilencedLogging():
            straight = train(self.dataset, MICRO_TRACKER, MICRO_TRAIN, steps=10)
            half = train(self.dataset, MICRO_TRACKER, MICRO_TRAIN, steps=5)
            path = os.path.join(self.tmpdir, 'half.ckpt')
            save_checkpoint(path, half.params, half.optimizer, MICRO_TRACKER, MICRO_TRAIN)
            checkpoint = load_checkpoint(path)
            resumed = train(self.dataset, checkpoint.tracker_config, checkpoint.train_config,
                            state=TrainState(checkpoint.params, checkpoint.optimizer), steps=5)
        self.assertEqual(resumed.step, 10)
        self.assertEqual([r['total'] for r in resumed.history], [r['total'] for r in straight.history[5:]])
        for name, value in straight.params.items():
            np.testing.assert_array_equal(resumed.params[name], value)

    def test_overfits_one_window(self):
        state = initial_state(MICRO_TRACKER, MICRO_TRAIN)
        window = batch_for_step(self.dataset, 0, MICRO_TRACKER, MICRO_TRAIN)
        params, optimizer_state = state.params, state.optimizer
        losses = []
        with SilencedLogging():
            for _ in range(200):
                breakdown, params, optimizer_state = train_step(window, params, optimizer_state, MICRO_TRACKER,
                                                                MICRO_TRAIN)
                losses.append(breakdown.total.item())
        self.assertLess(losses[-1], losses[0])

    def test_stops_at_the_configured_length(self):
        config = dataclasses.replace(MICRO_TRAIN, epochs=1, steps_per_epoch=2)
        with SilencedLogging():
            state = train(self.dataset, MICRO_TRACKER, config, steps=10)
        self.assertEqual(state.step, 2)


class CheckpointTests(unittest.TestCase):

    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()
        self.path = os.path.join(self.tmpdir, 'model.ckpt')
        self.params = build_parameters(MICRO_TRACKER, seed=4)
        self.optimizer = Adam().init(self.params)
        self.optimizer.step = 7

    def tearDown(self):
        shutil.rmtree(self.tmpdir)

    def test_round_trip(self):
        with SilencedLogging():
            save_checkpoint(self.path, self.params, self.optimizer, MICRO_TRACKER, MICRO_TRAIN, epoch=1)
        checkpoint = load_checkpoint(self.path, model=build_parameters(MICRO_TRACKER))
        self.assertEqual(checkpoint.tracker_config, MICRO_TRACKER)
        self.assertEqual(checkpoint.train_config, MICRO_TRAIN)
        self.assertEqual(checkpoint.epoch, 1)
        self.assertEqual(checkpoint.optimizer.step, 7)
        self.assertEqual(list(checkpoint.params), list(self.params))
        for name, value in self.params.items():
            np.testing.assert_array_equal(checkpoint.params[name], value)
            np.testing.assert_array_equal(checkpoint.optimizer.m[name], np.zeros_like(value))

    def test_file_layout(self):
        with SilencedLogging():
            save_checkpoint(self.path, self.params, self.optimizer, MICRO_TRACKER, MICRO_TRAIN)
        with open(self.path, 'rb') as handle:
            data = handle.read()
        self.assertTrue(data.startswith(b'CKPT v1\nCONFIG '))
        config, arrays = read_arrays(data)
        self.assertIn('num_tokens = 2', config)
        self.assertEqual(len(arrays), 3 * len(self.params) + 2)
        self.assertEqual(arrays['meta.step'], 7.0)

    def test_token_count_mismatch(self):
        with SilencedLogging():
            save_checkpoint(self.path, self.params, self.optimizer, MICRO_TRACKER, MICRO_TRAIN)
        larger = build_parameters(dataclasses.replace(MICRO_TRACKER, num_tokens=3))
        with self.assertRaises(CheckpointMismatchError) as caught:
            load_checkpoint(self.path, model=larger)
        self.assertEqual(caught.exception.mismatches, ['fg_tokens: checkpoint (2, 4) vs model (3, 4)'])

    def test_missing_and_extra_names(self):
        with self.assertRaises(CheckpointMismatchError) as caught:
            check_compatible({'a': np.zeros(2), 'b': np.zeros(1)}, {'a': (2,), 'c': np.zeros(3)})
        self.assertEqual(caught.exception.mismatches, ['b: not in the model', 'c: missing from the checkpoint'])
        check_compatible({'a': np.zeros((2, 3))}, {'a': (2, 3)})

    def test_truncated(self):
        with SilencedLogging():
            save_checkpoint(self.path, self.params, self.optimizer, MICRO_TRACKER, MICRO_TRAIN)
        with open(self.path, 'rb') as handle:
            data = handle.read()
        with open(self.path, 'wb') as handle:
            handle.write(data[:len(data) // 2])
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

    def test_not_a_checkpoint(self):
        with open(self.path, 'wb') as handle:
            handle.write(b'hello\n')
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)
