"""Recognition accuracy and center-distance localization scoring.

Per-class top-1/top-5 accuracy is averaged unweighted over the classes that
have at least one labeled instance. Localization matches predicted proxy
centers to ground-truth centers of the same class one-to-one, nearest pair
first, inside a distance threshold; matched pairs are true positives,
leftover proxies false positives, leftover ground truths false negatives.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ClassAccuracy:
    index: int
    name: str
    count: int
    top1: float
    top5: float


@dataclass
class LocalizationResult:
    precision: float | None
    recall: float | None
    tp: int
    fp: int
    fn: int


@dataclass
class EvalReport:
    classes: list = field(default_factory=list)
    avg_top1: float = 0.0
    avg_top5: float = 0.0
    total_instances: int = 0
    localization: LocalizationResult | None = None

    def to_tsv(self):
        lines = ["class\tcount\ttop1\ttop5"]
        for row in self.classes:
            lines.append(f"{row.name}\t{row.count}\t{row.top1:.6f}\t{row.top5:.6f}")
        lines.append(f"Avg.\t{self.total_instances}\t{self.avg_top1:.6f}\t{self.avg_top5:.6f}")
        if self.localization is not None:
            loc = self.localization
            prec = "-" if loc.precision is None else f"{loc.precision:.6f}"
            rec = "-" if loc.recall is None else f"{loc.recall:.6f}"
            lines.append(
                f"localization\ttp={loc.tp} fp={loc.fp} fn={loc.fn}\t{prec}\t{rec}"
            )
        return "\n".join(lines) + "\n"


def recognition_report(topk_indices, labels, class_names=None):
    """Per-class and class-average top-1/top-5 accuracy.

    ``topk_indices`` holds, per instance, predicted class indices in
    descending confidence order (at least one column; top-5 uses the first
    five). ``labels`` is the true class index per instance.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(topk_indices) != labels.shape[0]:
        raise ValueError("every prediction needs a label")
    if labels.shape[0] == 0:
        raise ValueError("no instances to evaluate")
    ranked = [np.asarray(r, dtype=np.int64).reshape(-1) for r in topk_indices]
    if any(r.shape[0] < 1 for r in ranked):
        raise ValueError("each prediction needs at least one ranked class")
    report = EvalReport(total_instances=labels.shape[0])
    for cls in np.unique(labels):
        mask = np.flatnonzero(labels == cls)
        top1 = sum(1 for i in mask if ranked[i][0] == cls) / mask.shape[0]
        top5 = sum(1 for i in mask if cls in ranked[i][:5]) / mask.shape[0]
        name = class_names[cls] if class_names is not None else str(int(cls))
        report.classes.append(
            ClassAccuracy(index=int(cls), name=name, count=int(mask.shape[0]), top1=top1, top5=top5)
        )
    report.avg_top1 = float(np.mean([c.top1 for c in report.classes]))
    report.avg_top5 = float(np.mean([c.top5 for c in report.classes]))
    return report


def localization_pr(centers, pred_classes, gt_centers, gt_classes, threshold=2.0):
    """Greedy nearest-first one-to-one center matching within ``threshold``.

    Candidate (proxy, ground-truth) pairs of the same class closer than the
    threshold are processed by increasing distance (ties: lower proxy index,
    then lower ground-truth index); each side matches at most once. Empty
    denominators yield ``None`` rather than 0.
    """
    if threshold <= 0.0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    gt_centers = np.asarray(gt_centers, dtype=np.float64).reshape(-1, 3)
    pred_classes = np.asarray(pred_classes, dtype=np.int64)
    gt_classes = np.asarray(gt_classes, dtype=np.int64)
    candidates = []
    for p in range(centers.shape[0]):
        for g in range(gt_centers.shape[0]):
            if pred_classes[p] != gt_classes[g]:
                continue
            dist = float(np.linalg.norm(centers[p] - gt_centers[g]))
            if dist <= threshold:
                candidates.append((dist, p, g))
    candidates.sort()
    used_p, used_g = set(), set()
    tp = 0
    for _, p, g in candidates:
        if p in used_p or g in used_g:
            continue
        used_p.add(p)
        used_g.add(g)
        tp += 1
    fp = centers.shape[0] - tp
    fn = gt_centers.shape[0] - tp
    precision = tp / (tp + fp) if tp + fp > 0 else None
    recall = tp / (tp + fn) if tp + fn > 0 else None
    return LocalizationResult(precision=precision, recall=recall, tp=tp, fp=fp, fn=fn)
