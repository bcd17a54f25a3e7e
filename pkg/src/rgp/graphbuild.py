"""Tiling, patch features, k-NN spatial graphs, normalized adjacency.

Graph file format (binary, little-endian), magic ``PGR1``:

    magic     4 bytes  b"PGR1"
    n_nodes   uint32
    d         uint32   feature width
    label     uint32   class index
    coords    n_nodes pairs of int32 (grid_x, grid_y)
    n_edges   uint32
    edges     n_edges pairs of uint32 (u, v), u < v
    features  n_nodes * d float32, row-major

Feature text format: first line ``N d``, then N lines of d reals.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corruption import ImagePatch

FEATURE_DIM = 64
_HIST_BINS = 16
_GRAD_BINS = 10
_GRAD_MAX = float(np.sqrt(2.0))

GRAPH_MAGIC = b"PGR1"


def tile(image: np.ndarray, patch_side: int = 256) -> list[ImagePatch]:
    """Cut a (H, W, 3) uint8 raster into non-overlapping square patches.

    Patches come out in row-major grid order with their (grid_x, grid_y)
    coordinate; trailing remainders that do not fill a patch are dropped.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError(f"expected (H, W, 3) uint8 image, got {image.shape} {image.dtype}")
    h, w = image.shape[:2]
    if h < patch_side or w < patch_side:
        raise ValueError(f"image {w}x{h} smaller than one {patch_side}-pixel patch")
    patches = []
    for gy in range(h // patch_side):
        for gx in range(w // patch_side):
            block = image[
                gy * patch_side : (gy + 1) * patch_side,
                gx * patch_side : (gx + 1) * patch_side,
            ]
            patches.append(ImagePatch(pixels=block.copy(), grid_x=gx, grid_y=gy))
    return patches


def reassemble(patches: list[ImagePatch]) -> np.ndarray:
    """Stitch patches back into one raster (inverse of tile on exact grids)."""
    nx = max(p.grid_x for p in patches) + 1
    ny = max(p.grid_y for p in patches) + 1
    side = patches[0].height
    out = np.zeros((ny * side, nx * side, 3), dtype=np.uint8)
    for p in patches:
        out[p.grid_y * side : (p.grid_y + 1) * side, p.grid_x * side : (p.grid_x + 1) * side] = p.pixels
    return out


def toy_featurize(patch: ImagePatch) -> np.ndarray:
    """Deterministic 64-dim descriptor standing in for a learned extractor.

    Layout:
        [0:16]   R intensity histogram, 16 bins of width 16, sums to 1
        [16:32]  G histogram
        [32:48]  B histogram
        [48:51]  per-channel means of value/255
        [51:54]  per-channel population stds of value/255
        [54:64]  histogram of gradient magnitude of the gray image
                 (forward differences, zero at the last row/column),
                 10 bins over [0, sqrt(2)], sums to 1
    """
    pix = patch.pixels
    n = pix.shape[0] * pix.shape[1]
    feat = np.zeros(FEATURE_DIM)
    for c in range(3):
        hist = np.bincount(pix[..., c].reshape(-1) >> 4, minlength=_HIST_BINS)
        feat[c * _HIST_BINS : (c + 1) * _HIST_BINS] = hist / n
    scaled = pix.astype(np.float64) / 255.0
    feat[48:51] = scaled.mean(axis=(0, 1))
    feat[51:54] = scaled.std(axis=(0, 1))
    gray = scaled.mean(axis=2)
    gx = np.zeros_like(gray)
    gy = np.zeros_like(gray)
    gx[:, :-1] = gray[:, 1:] - gray[:, :-1]
    gy[:-1, :] = gray[1:, :] - gray[:-1, :]
    mag = np.hypot(gx, gy)
    bins = np.minimum((mag / (_GRAD_MAX / _GRAD_BINS)).astype(np.intp), _GRAD_BINS - 1)
    feat[54:64] = np.bincount(bins.reshape(-1), minlength=_GRAD_BINS) / n
    return feat


def knn_graph(coords: np.ndarray, k: int) -> list[tuple[int, int]]:
    """Undirected k-nearest-neighbor edges on grid coordinates.

    Euclidean distance; ties broken by smaller node index; k is clamped
    to n_nodes - 1. Directed picks are symmetrized and deduplicated.
    """
    coords = np.asarray(coords, dtype=np.int64)
    n = coords.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n < 2:
        raise ValueError(f"need at least 2 nodes, got {n}")
    k = min(k, n - 1)
    diff = coords[:, None, :] - coords[None, :, :]
    dist2 = (diff * diff).sum(axis=2)
    np.fill_diagonal(dist2, np.iinfo(np.int64).max)  # exclude self
    index = np.arange(n)
    edges: set[tuple[int, int]] = set()
    for i in range(n):
        ranked = np.lexsort((index, dist2[i]))
        for j in ranked[:k]:
            j = int(j)
            edges.add((min(i, j), max(i, j)))
    return sorted(edges)


def normalized_adjacency(edges: list[tuple[int, int]], n_nodes: int) -> np.ndarray:
    """Dense symmetric-normalized adjacency with self-loops.

    A_hat = D^{-1/2} (A + I) D^{-1/2} where D is the degree matrix of
    A + I. Isolated nodes come out with A_hat[i, i] = 1.
    """
    a = np.eye(n_nodes)
    for u, v in edges:
        if not (0 <= u < n_nodes and 0 <= v < n_nodes):
            raise ValueError(f"edge ({u}, {v}) out of range for {n_nodes} nodes")
        a[u, v] = 1.0
        a[v, u] = 1.0
    d_inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]


@dataclass
class PatchGraph:
    """One image as a spatial graph of patch descriptors."""

    features: np.ndarray  # (n_nodes, d) float64
    coords: np.ndarray  # (n_nodes, 2) int32, (grid_x, grid_y)
    edges: list[tuple[int, int]]
    adjacency_norm: np.ndarray  # (n_nodes, n_nodes) float64
    label: int
    id: str

    @property
    def n_nodes(self) -> int:
        return self.features.shape[0]


def build_patch_graph(
    image: np.ndarray,
    label: int,
    graph_id: str,
    patch_side: int = 256,
    k: int = 8,
) -> PatchGraph:
    patches = tile(image, patch_side)
    features = np.stack([toy_featurize(p) for p in patches])
    coords = np.array([(p.grid_x, p.grid_y) for p in patches], dtype=np.int32)
    if len(patches) >= 2:
        edges = knn_graph(coords, k)
    else:
        edges = []
    return PatchGraph(
        features=features,
        coords=coords,
        edges=edges,
        adjacency_norm=normalized_adjacency(edges, len(patches)),
        label=label,
        id=graph_id,
    )


def save_graph(path: str | Path, graph: PatchGraph) -> None:
    path = Path(path)
    n, d = graph.features.shape
    blob = bytearray()
    blob += GRAPH_MAGIC
    blob += struct.pack("<III", n, d, graph.label)
    blob += np.ascontiguousarray(graph.coords, dtype="<i4").tobytes()
    blob += struct.pack("<I", len(graph.edges))
    for u, v in graph.edges:
        blob += struct.pack("<II", u, v)
    blob += np.ascontiguousarray(graph.features, dtype="<f4").tobytes()
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(bytes(blob))
    os.replace(tmp, path)


def load_graph(path: str | Path) -> PatchGraph:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != GRAPH_MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}, expected {GRAPH_MAGIC!r}")
    pos = 4

    def take(count: int) -> bytes:
        nonlocal pos
        if pos + count > len(raw):
            raise ValueError(f"{path}: truncated graph file at byte {pos}")
        chunk = raw[pos : pos + count]
        pos += count
        return chunk

    n, d, label = struct.unpack("<III", take(12))
    coords = np.frombuffer(take(n * 8), dtype="<i4").reshape(n, 2).astype(np.int32)
    (n_edges,) = struct.unpack("<I", take(4))
    pairs = np.frombuffer(take(n_edges * 8), dtype="<u4").reshape(n_edges, 2)
    edges = [(int(u), int(v)) for u, v in pairs]
    features = np.frombuffer(take(n * d * 4), dtype="<f4").reshape(n, d).astype(np.float64)
    if pos != len(raw):
        raise ValueError(f"{path}: {len(raw) - pos} trailing bytes")
    return PatchGraph(
        features=features,
        coords=coords,
        edges=edges,
        adjacency_norm=normalized_adjacency(edges, n),
        label=int(label),
        id=path.stem,
    )


def save_features(path: str | Path, matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got {matrix.shape}")
    lines = [f"{matrix.shape[0]} {matrix.shape[1]}"]
    for row in matrix:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_features(path: str | Path) -> np.ndarray:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty feature file")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError(f"{path}: header must be 'N d', got {lines[0]!r}")
    n, d = int(header[0]), int(header[1])
    if len(lines) - 1 != n:
        raise ValueError(f"{path}: expected {n} rows, found {len(lines) - 1}")
    out = np.empty((n, d))
    for i, line in enumerate(lines[1:]):
        values = line.split()
        if len(values) != d:
            raise ValueError(f"{path}: row {i} has {len(values)} values, expected {d}")
        out[i] = [float(v) for v in values]
    return out
