"""
Command-line entry point::

    chronotrack gen-data --spec suite.txt --out data/
    chronotrack train --config run.cfg --data data/ --out model.ckpt
    chronotrack track --ckpt model.ckpt --seq data/seq-0000.seq --out seq-0000.boxes
    chronotrack eval --pred boxes/ --gt data/ --report report.txt
    chronotrack analyze --ckpt model.ckpt --data data/ --mode consistency
    chronotrack selftest

Exit codes: 0 success, 1 usage error, 2 validation failure.
"""
import argparse
import logging
import os
import sys

from chronotrack import __version__
from chronotrack.config import TrackerConfig, TrainConfig, load_config
from chronotrack.data.io import (
    BOXES_SUFFIX, SEQUENCE_SUFFIX, dataset_paths, read_boxes, read_dataset, read_sequence, sequence_name,
    write_boxes, write_dataset,
)
from chronotrack.data.synth import generate_suite, load_suite
from chronotrack.evaluation import analysis, report
from chronotrack.evaluation.metrics import TrackletResult, ope
from chronotrack.exceptions import ChronoTrackError, EvaluationError
from chronotrack.model import build_parameters
from chronotrack.settings import settings
from chronotrack.tracker import Tracker
from chronotrack.training.checkpoint import check_compatible, load_checkpoint, save_checkpoint
from chronotrack.training.loop import TrainState, initial_state, train


logger = logging.getLogger('chronotrack')

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2
MODES = ('consistency', 'footprint', 'ablation', 'sweep', 'baseline', 'diversity')


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, '%s: error: %s\n' % (self.prog, message))


def _int_list(text):
    try:
        return [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError('expected comma separated integers, got %r' % text)


def build_parser():
    parser = ArgumentParser(prog='chronotrack', description='Token-memory 3D single object tracker')
    parser.add_argument('--version', action='version', version=__version__)
    parser.add_argument('--log-level', default=None, help='logging level (default: settings.LOG_LEVEL)')
    commands = parser.add_subparsers(dest='command', parser_class=ArgumentParser)
    commands.required = True

    command = commands.add_parser('gen-data', help='generate a synthetic sequence suite')
    command.add_argument('--spec', required=True)
    command.add_argument('--out', required=True)

    command = commands.add_parser('train', help='train a model')
    command.add_argument('--config')
    command.add_argument('--data', required=True)
    command.add_argument('--out', required=True)
    command.add_argument('--steps', type=int, help='stop after this many steps')
    command.add_argument('--resume', help='checkpoint to continue from')

    command = commands.add_parser('track', help='track a sequence file or a directory of them')
    command.add_argument('--ckpt', required=True)
    command.add_argument('--seq', required=True)
    command.add_argument('--out', required=True)

    command = commands.add_parser('eval', help='score predicted boxes against ground truth')
    command.add_argument('--pred', required=True)
    command.add_argument('--gt', required=True)
    command.add_argument('--report')

    command = commands.add_parser('analyze', help='run an analysis study')
    command.add_argument('--mode', required=True, choices=MODES)
    command.add_argument('--ckpt')
    command.add_argument('--config')
    command.add_argument('--data')
    command.add_argument('--train-data')
    command.add_argument('--report')
    command.add_argument('--steps', type=int)
    command.add_argument('--max-gap', type=int, default=20)
    command.add_argument('--capacities', type=_int_list, default=[1, 2, 3, 4, 8])
    command.add_argument('--rollout', action='store_true', help='also measure memory on tracked sequences')
    command.add_argument('--param')
    command.add_argument('--values')

    command = commands.add_parser('selftest', help='run the built-in oracle suites')
    command.add_argument('--quick', action='store_true')
    return parser


def _emit(text, path):
    if path:
        with open(path, 'w') as handle:
            handle.write(text)
        logger.info('wrote %s', path)
    else:
        sys.stdout.write(text)


def _configs(args, checkpoint=None):
    if checkpoint is not None:
        tracker_config, train_config = checkpoint.tracker_config, checkpoint.train_config
    else:
        tracker_config, train_config = TrackerConfig(), TrainConfig()
    if getattr(args, 'config', None):
        tracker_config, train_config = load_config(args.config, tracker=tracker_config, train=train_config)
    return tracker_config, train_config


def _require(args, *names):
    missing = ['--%s' % name.replace('_', '-') for name in names if not getattr(args, name)]
    if missing:
        raise UsageError('--mode %s needs %s' % (args.mode, ' and '.join(missing)))


def gen_data(args):
    sequences = generate_suite(load_suite(args.spec))
    write_dataset(sequences, args.out)
    return EXIT_OK


def train_command(args):
    dataset = read_dataset(args.data)
    if args.resume:
        checkpoint = load_checkpoint(args.resume)
        tracker_config, train_config = _configs(args, checkpoint)
        state = TrainState(checkpoint.params, checkpoint.optimizer)
        check_compatible(checkpoint.params, build_parameters(tracker_config))
    else:
        tracker_config, train_config = _configs(args)
        state = initial_state(tracker_config, train_config)
    state = train(dataset, tracker_config, train_config, state=state, steps=args.steps)
    save_checkpoint(args.out, state.params, state.optimizer, tracker_config, train_config,
                    epoch=state.step // train_config.steps_per_epoch)
    return EXIT_OK


def track_command(args):
    checkpoint = load_checkpoint(args.ckpt)
    tracker = Tracker(checkpoint.params, checkpoint.tracker_config)
    if os.path.isdir(args.seq):
        os.makedirs(args.out, exist_ok=True)
        jobs = [(path, os.path.join(args.out, sequence_name(path) + BOXES_SUFFIX)) for path in dataset_paths(args.seq)]
    else:
        jobs = [(args.seq, args.out)]
    for source, target in jobs:
        sequence = read_sequence(source)
        write_boxes(tracker.track_sequence(sequence), target)
    if tracker.frames_tracked:
        logger.info('tracked %d frames, %.2f ms/frame', tracker.frames_tracked, 1000.0 * tracker.seconds_per_frame)
    return EXIT_OK


def eval_command(args):
    tracklets = []
    for path in dataset_paths(args.gt, SEQUENCE_SUFFIX):
        sequence = read_sequence(path)
        predicted = os.path.join(args.pred, sequence.name + BOXES_SUFFIX)
        if not os.path.exists(predicted):
            raise EvaluationError(sequence.name, 'no predicted boxes at %s' % predicted)
        boxes = read_boxes(predicted, sequence.size)
        result = ope(boxes, sequence.boxes[1:], sequence.name)
        tracklets.append(TrackletResult(sequence.name, sequence.category, len(sequence), result))
    if not tracklets:
        raise EvaluationError(args.gt, 'no sequence files found')
    _emit(report.ope_report(tracklets), args.report)
    return EXIT_OK


def analyze_command(args):
    checkpoint = load_checkpoint(args.ckpt) if args.ckpt else None
    tracker_config, train_config = _configs(args, checkpoint)
    if args.mode == 'footprint':
        counts = None
        if args.rollout:
            _require(args, 'ckpt', 'data')
            counts = [c for s in read_dataset(args.data) for c in
                      analysis.rollout_element_counts(checkpoint.params, tracker_config, s)]
        text = report.footprint_report(analysis.memory_footprint(tracker_config, args.capacities), counts)
    elif args.mode in ('consistency', 'baseline', 'diversity'):
        _require(args, 'ckpt', 'data')
        sequences = read_dataset(args.data)
        if args.mode == 'consistency':
            profile = analysis.consistency_profile(checkpoint.params, tracker_config, sequences, args.max_gap,
                                                   train_config.tau_dist)
            text = report.consistency_report(profile)
        elif args.mode == 'baseline':
            text = report.study_report('Frozen template baseline',
                                       analysis.frozen_baseline(checkpoint.params, tracker_config, sequences))
        else:
            rows = [(s.name, analysis.token_diversity(checkpoint.params, tracker_config, s)) for s in sequences]
            text = report.diversity_report(rows)
    else:
        _require(args, 'data')
        eval_set = read_dataset(args.data)
        train_set = read_dataset(args.train_data) if args.train_data else eval_set
        if args.mode == 'ablation':
            rows = analysis.ablation(train_set, eval_set, tracker_config, train_config, steps=args.steps)
            text = report.study_report('Ablation', rows)
        else:
            _require(args, 'param', 'values')
            values = [value.strip() for value in args.values.split(',') if value.strip()]
            rows = analysis.sweep(train_set, eval_set, tracker_config, train_config, args.param, values,
                                  steps=args.steps)
            text = report.study_report('Sweep over %s' % args.param, rows)
    _emit(text, args.report)
    return EXIT_OK


def selftest_command(args):
    from chronotrack.selftest import run_selftest
    return EXIT_OK if run_selftest(quick=args.quick) else EXIT_INVALID


COMMANDS = {
    'gen-data': gen_data,
    'train': train_command,
    'track': track_command,
    'eval': eval_command,
    'analyze': analyze_command,
    'selftest': selftest_command,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as stop:
        return stop.code if isinstance(stop.code, int) else EXIT_USAGE
    logging.basicConfig(level=(args.log_level or settings.LOG_LEVEL).upper(),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        return COMMANDS[args.command](args)
    except UsageError as error:
        parser.print_usage(sys.stderr)
        sys.stderr.write('chronotrack: error: %s\n' % error)
        return EXIT_USAGE
    except (ChronoTrackError, OSError) as error:
        logger.error('%s', error)
        sys.stderr.write('chronotrack: %s\n' % error)
        return EXIT_INVALID


if __name__ == '__main__':
    sys.exit(main())
