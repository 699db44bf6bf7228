"""Structured triangulations of a rectangle with four tagged boundary segments.

Node ``(i, j)`` sits at ``(i * W / (nx - 1), j * H / (ny - 1))`` and has
global index ``j * nx + i``.  Every cell is cut by the diagonal running from
its lower-left to its upper-right corner.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


class SegmentId(enum.Enum):
    """Boundary segments of the rectangle.

    ``GAMMA1`` (bottom) carries the Cauchy data, ``GAMMA2`` (top) is the
    inaccessible part whose trace is reconstructed, ``GAMMA3``/``GAMMA4`` are
    the left and right sides.
    """

    GAMMA1 = 1
    GAMMA2 = 2
    GAMMA3 = 3
    GAMMA4 = 4

    @property
    def is_vertical(self) -> bool:
        return self in (SegmentId.GAMMA3, SegmentId.GAMMA4)


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray
    triangles: np.ndarray
    segment_nodes: dict
    segment_edges: dict
    nx: int
    ny: int
    width: float
    height: float

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def shape_gradients(self) -> np.ndarray:
        """Constant gradients of the three P1 basis functions, shape (M, 3, 2)."""
        p = self.nodes[self.triangles]
        area2 = 2.0 * self.signed_areas
        grads = np.empty((self.n_triangles, 3, 2))
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            grads[:, a, 0] = (p[:, b, 1] - p[:, c, 1]) / area2
            grads[:, a, 1] = (p[:, c, 0] - p[:, b, 0]) / area2
        return grads

    def segment_length(self, seg: SegmentId) -> float:
        return self.height if seg.is_vertical else self.width

    def segment_coordinate(self, seg: SegmentId) -> np.ndarray:
        """Arc-length parameter of the nodes of ``seg``'s chain."""
        xy = self.nodes[self.segment_nodes[seg]]
        return xy[:, 1] if seg.is_vertical else xy[:, 0]

    def dump(self, path) -> None:
        """Write a plain-text listing: one ``node``/``tri`` line per entity."""
        lines = [f"# nx={self.nx} ny={self.ny} width={self.width!r} height={self.height!r}"]
        lines += [f"node {k} {float(x)!r} {float(y)!r}" for k, (x, y) in enumerate(self.nodes)]
        lines += [f"tri {k} {a} {b} {c}" for k, (a, b, c) in enumerate(self.triangles)]
        for seg in SegmentId:
            chain = " ".join(str(i) for i in self.segment_nodes[seg])
            lines.append(f"segment {seg.name} {chain}")
        Path(path).write_text("\n".join(lines) + "\n")


def build_rect_mesh(width: float, height: float, nx: int, ny: int) -> Mesh:
    """Uniform ``nx`` x ``ny`` node grid on ``(0, width) x (0, height)``."""
    if nx < 2 or ny < 2:
        raise ValueError(f"need nx >= 2 and ny >= 2, got nx={nx}, ny={ny}")
    if not (width > 0 and height > 0):
        raise ValueError(f"extents must be positive, got width={width}, height={height}")

    xs = np.linspace(0.0, width, nx)
    ys = np.linspace(0.0, height, ny)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    idx = np.arange(nx * ny).reshape(ny, nx)
    ll = idx[:-1, :-1].ravel()
    lr = idx[:-1, 1:].ravel()
    ur = idx[1:, 1:].ravel()
    ul = idx[1:, :-1].ravel()
    lower = np.column_stack([ll, lr, ur])
    upper = np.column_stack([ll, ur, ul])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)

    chains = {
        SegmentId.GAMMA1: idx[0, :].copy(),
        SegmentId.GAMMA2: idx[-1, :].copy(),
        SegmentId.GAMMA3: idx[:, 0].copy(),
        SegmentId.GAMMA4: idx[:, -1].copy(),
    }
    edges = {seg: np.column_stack([c[:-1], c[1:]]) for seg, c in chains.items()}
    for c in chains.values():
        c.setflags(write=False)
    nodes.setflags(write=False)
    triangles.setflags(write=False)
    return Mesh(nodes, triangles, chains, edges, nx, ny, float(width), float(height))


def segment_chain(mesh: Mesh, seg: SegmentId) -> np.ndarray:
    """Node indices of ``seg`` ordered by increasing coordinate, corners included."""
    return mesh.segment_nodes[seg]
