"""
Training losses: temporal consistency, memory cycle consistency, the decoder
loss of the proposal-free head, and their unweighted total.
"""
from dataclasses import dataclass, fields

import numpy as np

from chronotrack.autodiff import ops
from chronotrack.autodiff.graph import Tensor
from chronotrack.geometry import box_to_local, normalize_angle


@dataclass
class TransitionMatrices:
    token_to_point: Tensor
    point_to_token: Tensor
    cycle: Tensor


@dataclass
class LossBreakdown:
    tc: Tensor
    cycle: Tensor
    fg: Tensor
    mcc: Tensor
    m: Tensor
    c: Tensor
    bbox: Tensor
    dec: Tensor
    total: Tensor

    def as_dict(self):
        return {name: float(getattr(self, name).item()) for name in
                ('total', 'dec', 'tc', 'mcc', 'cycle', 'fg', 'm', 'c', 'bbox')}


def zero():
    return Tensor(np.zeros(()))


def _mean_of(terms):
    if not terms:
        return zero()
    total = terms[0]
    for term in terms[1:]:
        total = ops.add(total, term)
    return ops.scale(total, 1.0 / len(terms))


def temporal_consistency_loss(fg_features, correspondences):
    """
    Mean smooth-L1 over matched foreground feature pairs. ``fg_features[t]`` holds
    the foreground seed features of frame ``t`` in the order the correspondence
    indices refer to. Each pair contributes the mean over its D channels.
    """
    if not len(correspondences):
        return zero()
    total = None
    for source, target, source_index, target_index in correspondences.frame_pairs():
        diff = ops.sub(ops.gather_rows(fg_features[source], source_index),
                       ops.gather_rows(fg_features[target], target_index))
        term = ops.sum_reduce(ops.smooth_l1(diff))
        total = term if total is None else ops.add(total, term)
    width = fg_features[int(correspondences.source_frame[0])].shape[1]
    return ops.scale(total, 1.0 / (len(correspondences) * width))


def build_transitions(tokens, features, tau_cycle, eps=1e-8):
    """
    Token-to-point and point-to-token walks from temperature-softmaxed cosine
    similarities, and their two-step product.
    """
    similarity = ops.cosine_similarity(tokens, features, eps=eps)
    token_to_point = ops.softmax(similarity, temperature=tau_cycle)
    point_to_token = ops.softmax(ops.transpose(similarity), temperature=tau_cycle)
    return TransitionMatrices(token_to_point, point_to_token, ops.matmul(token_to_point, point_to_token))


def cycle_loss(matrices):
    return _mean_of([ops.cross_entropy(m.cycle, np.arange(m.cycle.shape[0])) for m in matrices])


def foreground_loss(matrices, fg_index_sets):
    """
    ``-mean log`` of the token-to-point mass landing on ground-truth foreground.
    Frames without foreground are left out of the average.
    """
    terms = []
    for matrix, index in zip(matrices, fg_index_sets):
        index = np.asarray(index, dtype=np.intp)
        if not index.size:
            continue
        indicator = np.zeros((matrix.token_to_point.shape[1], 1))
        indicator[index, 0] = 1.0
        mass = ops.matmul(matrix.token_to_point, indicator)
        terms.append(ops.neg(ops.mean_reduce(ops.log(mass))))
    return _mean_of(terms)


def mcc_loss(matrices, fg_index_sets):
    cycle = cycle_loss(matrices)
    fg = foreground_loss(matrices, fg_index_sets)
    return cycle, fg, ops.add(cycle, fg)


def box_residual_target(gt_box, reference):
    local = box_to_local(gt_box, reference)
    return np.array(local.center + (normalize_angle(local.heading),))


def decoder_loss(prediction, gt_box, gt_mask, lambda_m, lambda_c):
    """
    Returns ``(L_m, L_c, L_bbox, L_dec)`` for one frame.

    L_m: binary cross-entropy of targetness against the seed mask.
    L_c: squared distance between the targetness-weighted seed centroid and the
    ground-truth center. L_bbox: smooth-L1 summed over the (x, y, z, theta)
    residuals in the previous-box frame.
    """
    target = box_residual_target(gt_box, prediction.reference)
    mask_loss = ops.binary_cross_entropy(prediction.targetness, np.asarray(gt_mask, dtype=np.float64))
    count = prediction.seeds.shape[0]
    centroid = ops.reshape(ops.matmul(ops.reshape(prediction.weights, (1, count)), prediction.seeds), (3,))
    center_loss = ops.squared_error(centroid, target[:3], reduction='sum')
    bbox_loss = ops.sum_reduce(ops.smooth_l1(ops.sub(prediction.offset, target)))
    dec = ops.add(ops.add(ops.scale(mask_loss, lambda_m), ops.scale(center_loss, lambda_c)), bbox_loss)
    return mask_loss, center_loss, bbox_loss, dec


def total_loss(breakdown):
    return ops.add(ops.add(breakdown.dec, breakdown.tc), breakdown.mcc)


def combine(dec_terms, tc, cycle, fg):
    """
    Assemble a ``LossBreakdown`` from per-frame decoder terms
    ``(L_m, L_c, L_bbox, L_dec)`` averaged over frames, plus window-level terms.
    """
    m, c, bbox, dec = (_mean_of([terms[k] for terms in dec_terms]) for k in range(4))
    mcc = ops.add(cycle, fg)
    breakdown = LossBreakdown(tc=tc, cycle=cycle, fg=fg, mcc=mcc, m=m, c=c, bbox=bbox, dec=dec, total=zero())
    breakdown.total = total_loss(breakdown)
    return breakdown


def average_breakdowns(breakdowns):
    """
    Element-wise mean of several breakdowns as constant tensors (batch report).
    """
    names = [f.name for f in fields(LossBreakdown)]
    values = {name: Tensor(np.array(np.mean([getattr(b, name).item() for b in breakdowns]))) for name in names}
    return LossBreakdown(**values)
