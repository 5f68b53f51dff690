"""Overlapping pixel groups defining the l1/linf structured-sparsity norm."""

from __future__ import annotations

import numpy as np


class GroupStructure:
    """An ordered collection of overlapping pixel-index groups with weights.

    The structured norm of a vector s is sum_g weight_g * max_i_in_g |s_i|.
    Groups must jointly cover every pixel index in [0, p) so the norm is
    positive definite.

    Internally the groups are packed into one padded index matrix (pad value
    p, pointing at a scratch slot that always reads 0) and partitioned into
    color classes of pairwise-disjoint groups, which lets block-coordinate
    sweeps over the dual run vectorized one color at a time.
    """

    def __init__(self, groups, weights, p: int):
        if p <= 0:
            raise ValueError("p must be positive")
        self.p = int(p)
        self.groups = [np.asarray(g, dtype=np.intp) for g in groups]
        self.weights = np.asarray(weights, dtype=np.float64)
        if len(self.groups) == 0:
            raise ValueError("at least one group is required")
        if self.weights.shape != (len(self.groups),):
            raise ValueError("one weight per group is required")
        if np.any(self.weights <= 0):
            raise ValueError("group weights must be positive")

        covered = np.zeros(self.p, dtype=bool)
        for i, g in enumerate(self.groups):
            if g.size == 0:
                raise ValueError(f"group {i} is empty")
            if np.any(g < 0) or np.any(g >= self.p):
                raise ValueError(f"group {i} has indices outside [0, {self.p})")
            if np.any(np.diff(g) <= 0):
                raise ValueError(f"group {i} indices must be strictly increasing")
            covered[g] = True
        if not covered.all():
            missing = int(np.flatnonzero(~covered)[0])
            raise ValueError(f"pixel {missing} is not covered by any group")

        self.n_groups = len(self.groups)
        self.max_size = max(g.size for g in self.groups)
        self.sizes = np.array([g.size for g in self.groups], dtype=np.intp)
        # Padded (n_groups, max_size) index matrix; pad slot is index p.
        self.index_matrix = np.full((self.n_groups, self.max_size), self.p,
                                    dtype=np.intp)
        for i, g in enumerate(self.groups):
            self.index_matrix[i, : g.size] = g
        self.colors = self._color_classes()

    def _color_classes(self):
        """Greedy coloring of the group-overlap graph.

        Groups sharing a pixel get different colors; each returned class is
        an array of group indices with pairwise-disjoint supports.
        """
        pixel_owner = [[] for _ in range(self.p)]
        color_of = np.full(self.n_groups, -1, dtype=np.intp)
        n_colors = 0
        for i, g in enumerate(self.groups):
            taken = set()
            for px in g:
                for j in pixel_owner[px]:
                    taken.add(color_of[j])
            c = 0
            while c in taken:
                c += 1
            color_of[i] = c
            n_colors = max(n_colors, c + 1)
            for px in g:
                pixel_owner[px].append(i)
        return [np.flatnonzero(color_of == c) for c in range(n_colors)]

    def __len__(self) -> int:
        return self.n_groups


def build_grid_groups(H: int, W: int, k: int = 3, stride: int = 1) -> GroupStructure:
    """Groups from a k x k window scanned over an H x W frame.

    Windows are placed at every stride-step origin; for stride > 1 extra
    windows clamped to the right/bottom edges are appended so every pixel is
    covered. All weights are 1.0.
    """
    if H <= 0 or W <= 0 or k <= 0 or stride <= 0:
        raise ValueError("H, W, k and stride must be positive")
    if k > min(H, W):
        raise ValueError(f"window k={k} exceeds frame extent {H}x{W}")
    if stride > k:
        raise ValueError(f"stride {stride} > window {k} would leave uncovered pixels")

    rows = list(range(0, H - k + 1, stride))
    if rows[-1] != H - k:
        rows.append(H - k)
    cols = list(range(0, W - k + 1, stride))
    if cols[-1] != W - k:
        cols.append(W - k)

    base = (np.arange(k)[:, None] * W + np.arange(k)[None, :]).ravel()
    groups = [base + r * W + c for r in rows for c in cols]
    weights = np.ones(len(groups))
    return GroupStructure(groups, weights, H * W)


def omega_norm(s: np.ndarray, g: GroupStructure) -> float:
    """Weighted sum over groups of the max absolute value inside each group."""
    s = np.asarray(s, dtype=np.float64).ravel()
    if s.size != g.p:
        raise ValueError(f"vector length {s.size} != group domain {g.p}")
    padded = np.append(np.abs(s), 0.0)
    return float(padded[g.index_matrix].max(axis=1) @ g.weights)
