"""Foreground segmentation, bounding boxes and detection scoring."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Box:
    """Axis-aligned box: top-left pixel (x, y) and positive extents (w, h)."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError("box extents must be positive")
        if self.x < 0 or self.y < 0:
            raise ValueError("box origin must be nonnegative")

    @property
    def area(self) -> int:
        return self.w * self.h


@dataclass
class MatchResult:
    """One frame's detection-to-groundtruth matching counts."""

    tp: int
    fp: int
    fn: int
    pairs: list = field(default_factory=list)


def threshold_mask(s: np.ndarray, mode: str = "fixed", value: float = 0.1):
    """Binary foreground mask from |s| by fixed or quantile threshold.

    ``mode="fixed"`` keeps entries with |s_i| >= value; ``mode="quantile"``
    first sets the threshold to the value-quantile of |s|.
    """
    s = np.asarray(s, dtype=np.float64).ravel()
    a = np.abs(s)
    if mode == "fixed":
        theta = float(value)
    elif mode == "quantile":
        if not 0.0 < value < 1.0:
            raise ValueError("quantile must lie in (0, 1)")
        theta = float(np.quantile(a, value))
    else:
        raise ValueError(f"unknown threshold mode {mode!r}")
    return a >= theta


_OFFSETS_4 = ((-1, 0), (1, 0), (0, -1), (0, 1))
_OFFSETS_8 = _OFFSETS_4 + ((-1, -1), (-1, 1), (1, -1), (1, 1))


def connected_components(
    mask: np.ndarray,
    H: int,
    W: int,
    connectivity: int = 8,
    min_area: int = 2,
):
    """Bounding boxes of connected true-regions, sorted by (y, x).

    Components smaller than ``min_area`` pixels are dropped.
    """
    mask = np.asarray(mask, dtype=bool).ravel()
    if mask.size != H * W:
        raise ValueError(f"mask length {mask.size} != {H}x{W}")
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    offsets = _OFFSETS_4 if connectivity == 4 else _OFFSETS_8
    grid = mask.reshape(H, W)
    seen = np.zeros((H, W), dtype=bool)
    boxes = []
    for sy, sx in zip(*np.nonzero(grid)):
        if seen[sy, sx]:
            continue
        stack = [(int(sy), int(sx))]
        seen[sy, sx] = True
        area = 0
        y0 = y1 = int(sy)
        x0 = x1 = int(sx)
        while stack:
            cy, cx = stack.pop()
            area += 1
            y0 = min(y0, cy); y1 = max(y1, cy)
            x0 = min(x0, cx); x1 = max(x1, cx)
            for dy, dx in offsets:
                ny, nx = cy + dy, cx + dx
                if 0 <= ny < H and 0 <= nx < W and grid[ny, nx] and not seen[ny, nx]:
                    seen[ny, nx] = True
                    stack.append((ny, nx))
        if area >= min_area:
            boxes.append(Box(x=x0, y=y0, w=x1 - x0 + 1, h=y1 - y0 + 1))
    boxes.sort(key=lambda b: (b.y, b.x))
    return boxes


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / float(a.area + b.area - inter)


def match_detections(
    dets, gts, thresh: float = 0.3, method: str = "greedy"
) -> MatchResult:
    """One-to-one matching of detections to groundtruth boxes.

    Greedy descending-IoU matching by default; ``method="hungarian"`` solves
    the optimal assignment instead (for sensitivity checks). Pairs below the
    IoU threshold never match; leftovers count as FP/FN.
    """
    if not 0.0 < thresh <= 1.0:
        raise ValueError("IoU threshold must lie in (0, 1]")
    pairs = []
    if dets and gts:
        if method == "greedy":
            cands = []
            for di, dbox in enumerate(dets):
                for gi, gbox in enumerate(gts):
                    v = iou(dbox, gbox)
                    if v >= thresh:
                        cands.append((v, di, gi))
            cands.sort(key=lambda t: (-t[0], t[1], t[2]))
            used_d, used_g = set(), set()
            for v, di, gi in cands:
                if di in used_d or gi in used_g:
                    continue
                used_d.add(di)
                used_g.add(gi)
                pairs.append((di, gi, v))
        elif method == "hungarian":
            from scipy.optimize import linear_sum_assignment

            cost = np.zeros((len(dets), len(gts)))
            for di, dbox in enumerate(dets):
                for gi, gbox in enumerate(gts):
                    cost[di, gi] = -iou(dbox, gbox)
            rows, cols = linear_sum_assignment(cost)
            for di, gi in zip(rows, cols):
                v = -cost[di, gi]
                if v >= thresh:
                    pairs.append((int(di), int(gi), float(v)))
        else:
            raise ValueError(f"unknown matching method {method!r}")
    tp = len(pairs)
    return MatchResult(tp=tp, fp=len(dets) - tp, fn=len(gts) - tp, pairs=pairs)


def metrics_window(history, mode: str = "accumulated", k: int = 5):
    """(recall, precision, f1) over a window of per-frame match results.

    ``mode="accumulated"`` sums all frames, ``mode="last_k"`` only the k most
    recent. Empty denominators score 0 by convention.
    """
    if len(history) == 0:
        raise ValueError("history is empty")
    if mode == "accumulated":
        window = history
    elif mode == "last_k":
        if k < 1:
            raise ValueError("window length must be >= 1")
        window = history[-k:]
    else:
        raise ValueError(f"unknown metrics mode {mode!r}")
    tp = sum(m.tp for m in window)
    fp = sum(m.fp for m in window)
    fn = sum(m.fn for m in window)
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    f1 = (
        2.0 * recall * precision / (recall + precision)
        if recall + precision > 0
        else 0.0
    )
    return recall, precision, f1


def read_boxes_csv(path):
    """Parse a groundtruth/detections CSV into {frame_index: [Box, ...]}.

    Format: header ``frame_index,x,y,w,h`` then one integer row per box.
    Malformed lines raise with their line number.
    """
    by_frame: dict[int, list[Box]] = {}
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "frame_index,x,y,w,h":
        raise ValueError(f"{path}: line 1: expected header 'frame_index,x,y,w,h'")
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise ValueError(f"{path}: line {ln}: expected 5 comma-separated fields")
        try:
            fi, x, y, w, h = (int(v) for v in parts)
        except ValueError:
            raise ValueError(f"{path}: line {ln}: fields must be integers") from None
        if fi < 0:
            raise ValueError(f"{path}: line {ln}: frame_index must be >= 0")
        try:
            box = Box(x=x, y=y, w=w, h=h)
        except ValueError as exc:
            raise ValueError(f"{path}: line {ln}: {exc}") from None
        by_frame.setdefault(fi, []).append(box)
    return by_frame


def write_boxes_csv(path, by_frame) -> None:
    """Write {frame_index: [Box, ...]} in the groundtruth CSV format."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("frame_index,x,y,w,h\n")
        for fi in sorted(by_frame):
            for b in by_frame[fi]:
                fh.write(f"{fi},{b.x},{b.y},{b.w},{b.h}\n")
