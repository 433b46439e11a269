"""Segmentation quality metrics.

Two families: over-segmentation quality (object purity plus tolerant boundary
precision/recall) and area-weighted semantic classification metrics, together
with the best-case semantic score any labeling constant on each segment could
reach.

All area accounting excludes faces whose ground-truth label is negative;
reports carry flags naming every fallback convention that fired.
"""

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .adjacency import AdjacencyIndex, face_connected_components, k_ring_vertices_multi
from .mesh import TriangleMesh


@dataclass
class BoundarySet:
    """Interior mesh edges separating two differently labeled faces."""

    edge_ids: np.ndarray        # (E,) int64 indices into the adjacency edge table
    vertices: np.ndarray        # (E, 2) int32 endpoint pairs
    lengths: np.ndarray         # (E,) float64 edge lengths in metres
    origin: str = "segmentation"

    def __len__(self):
        return len(self.edge_ids)

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum())


@dataclass
class OversegReport:
    """Over-segmentation scores for one labeling against ground truth."""

    op: float
    bp: float
    br: float
    n_segments: int
    matched_pred_length: float      # B_S length matched against B_G
    matched_gt_length: float        # B_G length matched against B_S
    pred_boundary_length: float
    gt_boundary_length: float
    flags: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "op": self.op, "bp": self.bp, "br": self.br,
            "n_segments": self.n_segments,
            "matched_pred_length": self.matched_pred_length,
            "matched_gt_length": self.matched_gt_length,
            "pred_boundary_length": self.pred_boundary_length,
            "gt_boundary_length": self.gt_boundary_length,
            "flags": list(self.flags),
        }


@dataclass
class SemanticReport:
    """Area-weighted classification scores over mesh faces."""

    classes: np.ndarray         # (C,) int class ids, ascending
    confusion: np.ndarray       # (C, C) m^2; rows = ground truth, cols = predicted
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    iou: np.ndarray
    oa: float
    macc: float
    miou: float
    flags: list = field(default_factory=list)

    def as_dict(self) -> dict:
        per_class = {}
        for i, c in enumerate(self.classes):
            per_class[int(c)] = {
                "precision": float(self.precision[i]),
                "recall": float(self.recall[i]),
                "f1": float(self.f1[i]),
                "iou": float(self.iou[i]),
            }
        return {
            "classes": [int(c) for c in self.classes],
            "confusion": self.confusion.tolist(),
            "per_class": per_class,
            "oa": self.oa, "macc": self.macc, "miou": self.miou,
            "flags": list(self.flags),
        }


def object_purity(face_segment, gt_components, face_areas) -> float:
    """Area fraction of each segment lying inside its best ground-truth component.

    Faces with a negative ground-truth component are excluded from both the
    per-segment overlaps and the total area; faces outside every segment
    count toward the total but toward no segment.
    """
    seg = np.asarray(face_segment).reshape(-1)
    comp = np.asarray(gt_components).reshape(-1)
    areas = np.asarray(face_areas, dtype=np.float64).reshape(-1)
    if not (len(seg) == len(comp) == len(areas)):
        raise ValueError("face_segment, gt_components, face_areas lengths differ")
    labeled = comp >= 0
    if not labeled.any() or areas[labeled].sum() == 0.0:
        raise ValueError("no labeled ground truth")
    both = labeled & (seg >= 0)
    leftover = float(areas[labeled & (seg < 0)].sum())
    if not both.any():
        return 0.0
    s = seg[both].astype(np.int64)
    g = comp[both].astype(np.int64)
    n_g = int(g.max()) + 1
    # per (segment, component) overlap areas, then the best component per
    # segment; the denominator reuses the same bins so that a segmentation
    # equal to the components scores exactly 1
    keys = s * n_g + g
    overlap = np.bincount(keys, weights=areas[both])
    n_s = int(s.max()) + 1
    overlap = np.pad(overlap, (0, n_s * n_g - len(overlap))).reshape(n_s, n_g)
    purity = overlap.max(axis=1).sum()
    total = overlap.sum(axis=1).sum() + leftover
    return float(purity / total)


def boundary_set(adjacency: AdjacencyIndex, labels, *, skip_unlabeled=False,
                 origin="segmentation") -> BoundarySet:
    """Interior edges whose two incident faces carry different labels.

    Mesh-border edges never qualify. With skip_unlabeled, edges touching a
    face labeled below zero are dropped as well (ground-truth convention).
    """
    labels = np.asarray(labels).reshape(-1)
    if len(labels) != adjacency.n_faces:
        raise ValueError("labels length does not match face count")
    f0 = adjacency.edge_faces[:, 0]
    f1 = adjacency.edge_faces[:, 1]
    interior = f1 >= 0
    l0 = labels[f0]
    l1 = np.where(interior, labels[np.where(interior, f1, 0)], 0)
    mask = interior & (l0 != l1)
    if skip_unlabeled:
        mask &= (l0 >= 0) & (l1 >= 0)
    ids = np.flatnonzero(mask).astype(np.int64)
    return BoundarySet(edge_ids=ids,
                       vertices=adjacency.edge_vertices[ids],
                       lengths=adjacency.edge_length[ids].astype(np.float64),
                       origin=origin)


def match_boundaries(candidates: BoundarySet, reference: BoundarySet,
                     adjacency: AdjacencyIndex, rings: int = 2) -> np.ndarray:
    """Boolean mask: candidate edges with a reference edge nearby.

    A candidate edge matches when some reference edge has both endpoints
    inside the union of the two endpoint rings-neighborhoods of the
    candidate. rings=0 demands the exact same vertex pair.
    """
    if rings < 0:
        raise ValueError("rings must be >= 0")
    matched = np.zeros(len(candidates), dtype=bool)
    if len(candidates) == 0 or len(reference) == 0:
        return matched
    incident = defaultdict(list)
    for j, (a, b) in enumerate(reference.vertices):
        incident[int(a)].append(j)
        incident[int(b)].append(j)
    ref_u = reference.vertices[:, 0]
    ref_v = reference.vertices[:, 1]
    for i, (u, v) in enumerate(candidates.vertices):
        zone = k_ring_vertices_multi(adjacency, (int(u), int(v)), rings)
        near = set()
        for w in zone:
            near.update(incident.get(w, ()))
        matched[i] = any(int(ref_u[j]) in zone and int(ref_v[j]) in zone
                         for j in near)
    return matched


def boundary_precision(pred: BoundarySet, gt: BoundarySet,
                       adjacency: AdjacencyIndex, rings: int = 2) -> float:
    """Length fraction of predicted boundary edges near a true boundary.

    Both sets empty -> 1 by convention; empty prediction against a nonempty
    truth -> 0.
    """
    if len(pred) == 0:
        return 1.0 if len(gt) == 0 else 0.0
    matched = match_boundaries(pred, gt, adjacency, rings)
    return float(pred.lengths[matched].sum() / pred.lengths.sum())


def boundary_recall(pred: BoundarySet, gt: BoundarySet,
                    adjacency: AdjacencyIndex, rings: int = 2) -> float:
    """Length fraction of true boundary edges near a predicted one.

    Empty truth -> 1 by convention.
    """
    if len(gt) == 0:
        return 1.0
    matched = match_boundaries(gt, pred, adjacency, rings)
    return float(gt.lengths[matched].sum() / gt.lengths.sum())


def overseg_report(mesh: TriangleMesh, adjacency: AdjacencyIndex, face_segment,
                   gt_labels, rings: int = 2) -> OversegReport:
    """Full over-segmentation scorecard for one segmentation."""
    face_segment = np.asarray(face_segment).reshape(-1)
    gt_labels = np.asarray(gt_labels).reshape(-1)
    comps = face_connected_components(mesh, adjacency, gt_labels)
    areas = mesh.face_area
    op = object_purity(face_segment, comps, areas)
    pred_b = boundary_set(adjacency, face_segment, origin="segmentation")
    gt_b = boundary_set(adjacency, gt_labels, skip_unlabeled=True,
                        origin="ground_truth")
    flags = []
    if len(pred_b) == 0:
        flags.append("empty_pred_boundary")
    if len(gt_b) == 0:
        flags.append("empty_gt_boundary")
    if (face_segment < 0).any():
        flags.append("unsegmented_faces")
    matched_pred = 0.0
    matched_gt = 0.0
    if len(pred_b) and len(gt_b):
        matched_pred = float(
            pred_b.lengths[match_boundaries(pred_b, gt_b, adjacency, rings)].sum())
        matched_gt = float(
            gt_b.lengths[match_boundaries(gt_b, pred_b, adjacency, rings)].sum())
    bp = boundary_precision(pred_b, gt_b, adjacency, rings)
    br = boundary_recall(pred_b, gt_b, adjacency, rings)
    n_segments = len(np.unique(face_segment[face_segment >= 0]))
    return OversegReport(op=op, bp=bp, br=br, n_segments=n_segments,
                         matched_pred_length=matched_pred,
                         matched_gt_length=matched_gt,
                         pred_boundary_length=pred_b.total_length,
                         gt_boundary_length=gt_b.total_length,
                         flags=flags)


def semantic_metrics(pred_labels, gt_labels, face_areas,
                     classes=None) -> SemanticReport:
    """Area-weighted confusion matrix and the usual per-class scores.

    Faces with a negative ground-truth label are ignored; faces with a
    labeled ground truth but a negative prediction are dropped from the
    matrix and flagged. Per-class ratios with a zero denominator are
    reported as 0 and flagged. Mean scores average over classes present
    in the ground truth.
    """
    pred = np.asarray(pred_labels).reshape(-1)
    gt = np.asarray(gt_labels).reshape(-1)
    areas = np.asarray(face_areas, dtype=np.float64).reshape(-1)
    if not (len(pred) == len(gt) == len(areas)):
        raise ValueError("pred_labels, gt_labels, face_areas lengths differ")
    flags = []
    labeled = gt >= 0
    valid = labeled & (pred >= 0)
    if (labeled & ~valid).any():
        flags.append("unpredicted_faces_dropped")
    if classes is None:
        classes = np.unique(np.concatenate([gt[valid], pred[valid]])) \
            if valid.any() else np.zeros(0, dtype=np.int64)
    classes = np.asarray(classes, dtype=np.int64).reshape(-1)
    if valid.any():
        lut = {int(c): i for i, c in enumerate(classes)}
        try:
            g = np.array([lut[int(x)] for x in gt[valid]])
            p = np.array([lut[int(x)] for x in pred[valid]])
        except KeyError as exc:
            raise ValueError(f"label {exc.args[0]} not in class table") from None
    n_c = len(classes)
    confusion = np.zeros((n_c, n_c), dtype=np.float64)
    if valid.any() and n_c:
        flat = np.bincount(g * n_c + p, weights=areas[valid],
                           minlength=n_c * n_c)
        confusion = flat.reshape(n_c, n_c)
    tp = np.diag(confusion)
    gt_area = confusion.sum(axis=1)
    pred_area = confusion.sum(axis=0)

    def ratio(num, den, name):
        out = np.zeros_like(num)
        nz = den > 0
        out[nz] = num[nz] / den[nz]
        if (~nz).any():
            flags.append(f"zero_denominator_{name}")
        return out

    precision = ratio(tp, pred_area, "precision")
    recall = ratio(tp, gt_area, "recall")
    f1 = ratio(2.0 * precision * recall, precision + recall, "f1")
    iou = ratio(tp, gt_area + pred_area - tp, "iou")
    total = confusion.sum()
    oa = float(tp.sum() / total) if total > 0 else 0.0
    present = gt_area > 0
    macc = float(recall[present].mean()) if present.any() else 0.0
    miou = float(iou[present].mean()) if present.any() else 0.0
    if total == 0:
        flags.append("no_scorable_faces")
    return SemanticReport(classes=classes, confusion=confusion,
                          precision=precision, recall=recall, f1=f1, iou=iou,
                          oa=oa, macc=macc, miou=miou, flags=flags)


def majority_labels(face_segment, gt_labels, face_areas) -> np.ndarray:
    """Per-face labeling giving every segment its area-majority truth label.

    Votes ignore unlabeled faces; a tie goes to the lower class id; segments
    without any labeled face and faces outside every segment come back -1.
    """
    seg = np.asarray(face_segment).reshape(-1)
    gt = np.asarray(gt_labels).reshape(-1)
    areas = np.asarray(face_areas, dtype=np.float64).reshape(-1)
    out = np.full(len(seg), -1, dtype=np.int64)
    voting = (seg >= 0) & (gt >= 0)
    if not voting.any():
        return out
    classes = np.unique(gt[voting])
    cpos = {int(c): i for i, c in enumerate(classes)}
    s = seg[voting].astype(np.int64)
    g = np.array([cpos[int(x)] for x in gt[voting]])
    n_c = len(classes)
    n_s = int(s.max()) + 1
    votes = np.bincount(s * n_c + g, weights=areas[voting],
                        minlength=n_s * n_c).reshape(n_s, n_c)
    # argmax scans classes in ascending id order, so ties pick the lower id
    best = classes[np.argmax(votes, axis=1)]
    has_vote = votes.sum(axis=1) > 0
    inside = seg >= 0
    picked = seg[inside]
    out[inside] = np.where(has_vote[picked], best[picked], -1)
    return out


def max_achievable(face_segment, gt_labels, face_areas):
    """Best semantic scores reachable by any segment-constant labeling.

    Returns (SemanticReport, induced per-face labels).
    """
    induced = majority_labels(face_segment, gt_labels, face_areas)
    report = semantic_metrics(induced, gt_labels, face_areas)
    return report, induced
