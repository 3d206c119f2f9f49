"""
Plain-text reports: aligned tables followed by a ``# METRICS`` block of
``key=value`` lines that tools can parse back with ``parse_metrics``.
"""
import math

from chronotrack.evaluation.metrics import by_category, stratify_by_length


METRICS_HEADER = '# METRICS'


def _cell(value):
    if isinstance(value, float):
        return '%.4f' % value
    return str(value)


def format_table(title, headers, rows):
    cells = [[_cell(v) for v in row] for row in rows]
    widths = [max([len(h)] + [len(row[i]) for row in cells]) for i, h in enumerate(headers)]
    lines = ['## %s' % title, '  '.join(h.ljust(w) for h, w in zip(headers, widths)),
             '  '.join('-' * w for w in widths)]
    lines += ['  '.join(c.ljust(w) for c, w in zip(row, widths)) for row in cells]
    return '\n'.join(lines)


def metrics_block(metrics):
    lines = [METRICS_HEADER]
    lines += ['%s=%s' % (key, _metric(value)) for key, value in metrics.items()]
    return '\n'.join(lines)


def _metric(value):
    return repr(float(value)) if isinstance(value, float) else str(value)


def parse_metrics(text):
    """
    ``{key: value}`` from the ``# METRICS`` block; numbers come back as floats.
    """
    metrics, inside = {}, False
    for line in text.splitlines():
        line = line.strip()
        if line == METRICS_HEADER:
            inside = True
            continue
        if inside and '=' in line:
            key, value = line.split('=', 1)
            try:
                metrics[key] = float(value)
            except ValueError:
                metrics[key] = value
    return metrics


def render(sections, metrics):
    return '\n\n'.join(list(sections) + [metrics_block(metrics)]) + '\n'


def ope_report(tracklets):
    """
    Per-category table, length quartiles, per-tracklet rows and timing.
    """
    categories = by_category(tracklets)
    rows = [(name, len(result), result.success, result.precision) for name, result in categories.items()]
    sections = [format_table('OPE by category', ('category', 'frames', 'success', 'precision'), rows)]
    stratified = stratify_by_length(tracklets)
    summary = stratified.summary()
    sections.append(format_table('Length quartiles (thresholds %s)' % ', '.join('%.2f' % t for t in
                                                                                stratified.thresholds),
                                 ('group', 'tracklets', 'success', 'precision'),
                                 [(name,) + values for name, values in summary.items()]))
    ordered = sorted(tracklets, key=lambda t: t.name)
    sections.append(format_table('Tracklets', ('name', 'category', 'length', 'success', 'precision', 'ms/frame'),
                                 [(t.name, t.category, t.length, t.result.success, t.result.precision,
                                   1000.0 * t.seconds_per_frame) for t in ordered]))
    overall = categories['mean']
    metrics = {'success': overall.success, 'precision': overall.precision, 'frames': len(overall),
               'tracklets': len(tracklets)}
    for name, result in categories.items():
        if name != 'mean':
            metrics['success_%s' % name] = result.success
            metrics['precision_%s' % name] = result.precision
    for name, (count, success, precision) in summary.items():
        metrics['group_%s_size' % name] = count
        metrics['group_%s_success' % name] = success
    timed = [t.seconds_per_frame for t in ordered if t.seconds_per_frame]
    if timed:
        metrics['ms_per_frame'] = 1000.0 * math.fsum(timed) / len(timed)
    return render(sections, metrics)


def study_report(title, rows):
    table = format_table(title, ('variant', 'success', 'precision', 'delta success', 'ms/frame'),
                         [(row.label, row.result.success, row.result.precision,
                           row.extras.get('delta_success', 0.0), 1000.0 * row.seconds_per_frame) for row in rows])
    metrics = {}
    for row in rows:
        metrics['success[%s]' % row.label] = row.result.success
        metrics['precision[%s]' % row.label] = row.result.precision
        for key, value in sorted(row.extras.items()):
            metrics['%s[%s]' % (key, row.label)] = value
    return render([table], metrics)


def consistency_report(profile):
    table = format_table('Feature consistency', ('gap', 'cosine'), sorted(profile.items()))
    return render([table], {'similarity_gap_%d' % gap: value for gap, value in sorted(profile.items())})


def footprint_report(rows, counts=None):
    sections = [format_table('Memory footprint', ('capacity', 'token', 'baseline', 'ratio'),
                             [(r['capacity'], r['token'], r['baseline'], r['ratio']) for r in rows])]
    metrics = {}
    for r in rows:
        metrics['token_c%d' % r['capacity']] = r['token']
        metrics['baseline_c%d' % r['capacity']] = r['baseline']
    if counts:
        metrics['rollout_min'] = min(counts)
        metrics['rollout_max'] = max(counts)
    return render(sections, metrics)


def diversity_report(rows):
    table = format_table('Token diversity', ('sequence', 'tokens', 'used', 'entropy'),
                         [(name, d['tokens'], d['used'], d['entropy']) for name, d in rows])
    used = [d['used'] for _, d in rows]
    return render([table], {'tokens_used': sum(used) / len(used) if used else 0.0})
