"""Zero-level contours of sampled 2D fields (marching squares)."""

from collections import defaultdict
from typing import Dict, List, Tuple

import numpy as np

Point = Tuple[float, float]
EdgeKey = Tuple[str, int, int]

# Cell corners in order: 0=(i,j) 1=(i+1,j) 2=(i+1,j+1) 3=(i,j+1).
# Edges are named by their corner pairs; case index has corner 0 as the high bit.
MARCHING_SQUARES_TABLE = [
    [],                          # 0000
    [((0, 3), (2, 3))],          # 0001
    [((1, 2), (2, 3))],          # 0010
    [((0, 3), (1, 2))],          # 0011
    [((0, 1), (1, 2))],          # 0100
    None,                        # 0101 saddle
    [((0, 1), (2, 3))],          # 0110
    [((0, 1), (0, 3))],          # 0111
    [((0, 1), (0, 3))],          # 1000
    [((0, 1), (2, 3))],          # 1001
    None,                        # 1010 saddle
    [((0, 1), (1, 2))],          # 1011
    [((0, 3), (1, 2))],          # 1100
    [((1, 2), (2, 3))],          # 1101
    [((0, 3), (2, 3))],          # 1110
    [],                          # 1111
]

# Saddles: pick the pairing from the sign of the cell centre
SADDLES = {
    5: ([((0, 1), (1, 2)), ((0, 3), (2, 3))], [((0, 1), (0, 3)), ((1, 2), (2, 3))]),
    10: ([((0, 1), (0, 3)), ((1, 2), (2, 3))], [((0, 1), (1, 2)), ((0, 3), (2, 3))]),
}

_CORNER_OFFSETS = [(0, 0), (1, 0), (1, 1), (0, 1)]


def _edge_key(i: int, j: int, edge: Tuple[int, int]) -> EdgeKey:
    (a_di, a_dj), (b_di, b_dj) = _CORNER_OFFSETS[edge[0]], _CORNER_OFFSETS[edge[1]]
    low = (i + min(a_di, b_di), j + min(a_dj, b_dj))
    direction = "s" if a_di != b_di else "i"
    return direction, low[0], low[1]


def _lerp(values: np.ndarray, x: np.ndarray, y: np.ndarray, key: EdgeKey) -> Point:
    direction, i, j = key
    i1, j1 = (i + 1, j) if direction == "s" else (i, j + 1)
    v0, v1 = values[i, j], values[i1, j1]
    t = float(np.clip(v0 / (v0 - v1), 0.0, 1.0))
    return (float(x[i] * (1 - t) + x[i1] * t), float(y[j] * (1 - t) + y[j1] * t))


def _stitch(segments: List[Tuple[EdgeKey, EdgeKey]]) -> List[List[EdgeKey]]:
    neighbours: Dict[EdgeKey, List[EdgeKey]] = defaultdict(list)
    for a, b in segments:
        neighbours[a].append(b)
        neighbours[b].append(a)

    visited = set()
    chains = []
    # open chains start at degree-1 ends; whatever is left afterwards is a loop
    starts = [key for key in neighbours if len(neighbours[key]) == 1] + list(neighbours)
    for start in starts:
        if start in visited:
            continue
        chain = [start]
        visited.add(start)
        current = start
        while True:
            nxt = [n for n in neighbours[current] if n not in visited]
            if not nxt:
                break
            current = nxt[0]
            visited.add(current)
            chain.append(current)
        if len(neighbours[start]) == 2 and start in neighbours[chain[-1]] and len(chain) > 2:
            chain.append(start)
        chains.append(chain)
    return chains


def zero_contours(values: np.ndarray, x: np.ndarray, y: np.ndarray) -> List[List[Point]]:
    """Polylines (in axis coordinates) along which `values` crosses zero"""
    values = np.asarray(values, dtype=float)
    positive = values > 0
    case = (
        positive[:-1, :-1].astype(int) << 3
        | positive[1:, :-1].astype(int) << 2
        | positive[1:, 1:].astype(int) << 1
        | positive[:-1, 1:].astype(int)
    )
    segments: List[Tuple[EdgeKey, EdgeKey]] = []
    for i, j in zip(*np.nonzero((case != 0) & (case != 15))):
        index = int(case[i, j])
        edges = MARCHING_SQUARES_TABLE[index]
        if edges is None:
            centre = values[i:i + 2, j:j + 2].mean()
            edges = SADDLES[index][int(centre > 0)]
        for first, second in edges:
            segments.append((_edge_key(i, j, first), _edge_key(i, j, second)))

    return [[_lerp(values, x, y, key) for key in chain] for chain in _stitch(segments)]
