"""Exact earth mover's distance for small histograms.

The production histograms are 3-bin (loss, tie, win) distributions and
the default ground distance is the step matrix [[0,1,2],[1,0,1],[2,1,0]],
i.e. the line metric |i - j|.  ``emd_exact`` solves the transportation
LP directly (transportation simplex, exact for the tiny sizes used
here); ``emd_line_closed_form`` is the independent CDF identity used to
cross-check it.  No approximate EMD is used anywhere.

Clustering does not call the LP per pair: for the line metric, the
weighted sum of EMDs equals an L1 distance between fixed linear
embeddings of the histograms (see ``line_embedding``), which is what
the k-means inner loop uses.  The equivalence is asserted by tests
against both routes.
"""

from __future__ import annotations

import numpy as np

DEFAULT_GROUND_DISTANCE = np.array(
    [[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]]
)

NORM_TOL = 1e-9  # histogram mass tolerance
_REDUCED_COST_TOL = 1e-12


def validate_histogram(p, tol: float = NORM_TOL) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("histogram must be one-dimensional")
    if np.any(p < -tol):
        raise ValueError("histogram has negative mass")
    if abs(p.sum() - 1.0) > tol:
        raise ValueError(f"histogram mass {p.sum()} not within {tol} of 1")
    return np.clip(p, 0.0, None)


def is_line_metric(D: np.ndarray) -> bool:
    n, m = D.shape
    if n != m:
        return False
    expect = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    return bool(np.array_equal(D, expect))


def emd_exact(p, q, D=None) -> float:
    """Optimal transportation cost between histograms p and q.

    Solves the LP  min sum f_ij d_ij  s.t. row sums = p, col sums = q,
    f >= 0, by the transportation simplex.  Exact (up to float
    round-off) for the small sizes used here; intended for n, m <= 8.
    """
    p = validate_histogram(p)
    q = validate_histogram(q)
    D = DEFAULT_GROUND_DISTANCE if D is None else np.asarray(D, dtype=np.float64)
    if D.shape != (len(p), len(q)):
        raise ValueError(f"ground matrix shape {D.shape} does not match histograms")
    if np.any(D < 0):
        raise ValueError("ground distances must be non-negative")
    # rescale q so supplies and demands balance exactly
    q = q * (p.sum() / q.sum()) if q.sum() > 0 else q
    flow, basis = _northwest_corner(p, q)
    n, m = D.shape
    for _ in range(500):  # generous cap; Bland's rule precludes cycling
        entering = _entering_cell(D, basis)
        if entering is None:
            break
        cycle = _find_cycle(basis, entering)
        flow.setdefault(entering, 0.0)
        theta = min(flow[cell] for cell in cycle[1::2])
        leaving = min(
            (cell for cell in cycle[1::2] if flow[cell] <= theta + 0.0),
            key=lambda cell: (flow[cell], cell),
        )
        for idx, cell in enumerate(cycle):
            flow[cell] += theta if idx % 2 == 0 else -theta
        flow[leaving] = 0.0
        basis.remove(leaving)
        basis.add(entering)
    else:
        raise RuntimeError("transportation simplex failed to converge")
    return float(sum(flow[c] * D[c] for c in basis))


def _northwest_corner(p: np.ndarray, q: np.ndarray):
    """Initial basic feasible flow; pads the basis to n+m-1 cells."""
    n, m = len(p), len(q)
    supply = p.astype(np.float64).copy()
    demand = q.astype(np.float64).copy()
    flow: dict[tuple[int, int], float] = {}
    basis: set[tuple[int, int]] = set()
    i = j = 0
    while i < n and j < m:
        move = min(supply[i], demand[j])
        flow[(i, j)] = move
        basis.add((i, j))
        supply[i] -= move
        demand[j] -= move
        if i == n - 1 and j == m - 1:
            break
        # on a tie, stepping down keeps the basis graph a tree
        if supply[i] <= demand[j] and i < n - 1:
            i += 1
        elif j < m - 1:
            j += 1
        else:
            i += 1
    while len(basis) < n + m - 1:
        for i in range(n):
            for j in range(m):
                if (i, j) not in basis and not _creates_cycle(basis, (i, j)):
                    basis.add((i, j))
                    flow[(i, j)] = 0.0
                    break
            else:
                continue
            break
    return flow, basis


def _creates_cycle(basis: set, cell: tuple[int, int]) -> bool:
    try:
        _find_cycle(basis, cell)
        return True
    except ValueError:
        return False


def _entering_cell(D: np.ndarray, basis: set):
    """Most negative reduced-cost cell, lowest index on ties; None at optimum."""
    n, m = D.shape
    u = np.full(n, np.nan)
    v = np.full(m, np.nan)
    u[0] = 0.0
    for _ in range(n + m):
        for (i, j) in basis:
            if not np.isnan(u[i]) and np.isnan(v[j]):
                v[j] = D[i, j] - u[i]
            elif np.isnan(u[i]) and not np.isnan(v[j]):
                u[i] = D[i, j] - v[j]
    best, best_val = None, -_REDUCED_COST_TOL
    for i in range(n):
        for j in range(m):
            if (i, j) in basis:
                continue
            r = D[i, j] - u[i] - v[j]
            if r < best_val:
                best, best_val = (i, j), r
    return best


def _find_cycle(basis: set, entering: tuple[int, int]) -> list[tuple[int, int]]:
    """Alternating row/column cycle created by adding ``entering`` to the basis tree.

    Returns cells in cycle order starting at ``entering``; even positions
    gain flow, odd positions lose it.
    """
    by_row: dict[int, list[int]] = {}
    by_col: dict[int, list[int]] = {}
    for (i, j) in basis:
        by_row.setdefault(i, []).append(j)
        by_col.setdefault(j, []).append(i)

    start_i, start_j = entering
    path: list[tuple[int, int]] = [entering]

    def walk(cur_i: int, cur_j: int, move_in_row: bool) -> bool:
        if move_in_row:
            for j2 in sorted(by_row.get(cur_i, ())):
                if j2 == cur_j:
                    continue
                if j2 == start_j:
                    path.append((cur_i, j2))
                    return True
                path.append((cur_i, j2))
                if walk(cur_i, j2, False):
                    return True
                path.pop()
        else:
            for i2 in sorted(by_col.get(cur_j, ())):
                if i2 == cur_i:
                    continue
                path.append((i2, cur_j))
                if walk(i2, cur_j, True):
                    return True
                path.pop()
        return False

    if not walk(start_i, start_j, True):
        raise ValueError("entering cell closes no cycle (basis is not spanning)")
    return path


def emd_line_closed_form(p, q) -> float:
    """EMD for unit-spaced bins on a line: sum of |CDF differences|."""
    p = validate_histogram(p)
    q = validate_histogram(q)
    if len(p) != len(q):
        raise ValueError("histograms must share the bin count")
    return float(np.abs(np.cumsum(p - q)[:-1]).sum())


def check_phase_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or len(w) == 0:
        raise ValueError("weights must be a non-empty vector")
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be non-negative and not all zero")
    return w


def krwf_distance(a, b, weights, D=None) -> float:
    """Phase-weighted sum of EMDs between two recall-feature stacks.

    ``a`` and ``b`` are (k+1, 3) histogram stacks (row 0 is the current
    phase, later rows the ancestors); ``weights`` has k+1 entries.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError("recall features must share (k+1, bins) shape")
    w = check_phase_weights(weights)
    if len(w) != a.shape[0]:
        raise ValueError("one weight per recall slot required")
    return float(sum(w[j] * emd_exact(a[j], b[j], D) for j in range(a.shape[0])))


def line_embedding(histograms: np.ndarray, weights) -> np.ndarray:
    """Embed histogram stacks so L1 distance equals the weighted line-metric EMD.

    For the default ground distance, Emd(p, q) = sum_t |P_t - Q_t| over
    the first n-1 CDF terms, which is linear in the histogram.  Stacking
    the per-slot CDFs scaled by their phase weights therefore turns
    ``krwf_distance`` into the cityblock metric, and the weighted mean
    of member histograms maps to the weighted mean of embeddings.
    """
    h = np.asarray(histograms, dtype=np.float64)
    if h.ndim != 3:
        raise ValueError("expected (N, k+1, bins) histogram stacks")
    w = check_phase_weights(weights)
    if len(w) != h.shape[1]:
        raise ValueError("one weight per recall slot required")
    cdf = np.cumsum(h, axis=2)[:, :, :-1]
    return (cdf * w[None, :, None]).reshape(h.shape[0], -1)


# ---------------------------------------------------------------------------
# Ground-matrix config file: first line n, then n rows of n floats.

def save_ground_matrix(D: np.ndarray, path) -> None:
    D = np.asarray(D, dtype=np.float64)
    with open(path, "w") as f:
        f.write(f"{D.shape[0]}\n")
        for row in D:
            f.write(" ".join(repr(float(x)) for x in row) + "\n")


def load_ground_matrix(path) -> np.ndarray:
    with open(path) as f:
        n = int(f.readline().split()[0])
        rows = [
            [float(x) for x in f.readline().split()]
            for _ in range(n)
        ]
    D = np.array(rows, dtype=np.float64)
    if D.shape != (n, n) or np.any(D < 0):
        raise ValueError(f"{path}: malformed ground-distance matrix")
    return D
