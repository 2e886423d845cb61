"""Channel charting initialization: ISOMAP over a phase-insensitive metric.

The pipeline is pairwise distances -> k-NN graph -> geodesic (shortest-path)
distances -> classical MDS. The channel dissimilarity is the chordal
distance between phase-equivalence classes,

    d(h1, h2) = sqrt(2 - 2 |<h1, h2>| / (||h1|| ||h2||)),

which is invariant to a global phase rotation and positive rescaling of
either argument and equals min over phi of ||e^{j phi} h1/||h1|| - h2/||h2||||.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import ConfigError


def _as_channel_matrix(channels) -> np.ndarray:
    """Accept a D x N complex matrix or a sequence of equal-length vectors."""
    if isinstance(channels, np.ndarray) and channels.ndim == 2:
        return np.asarray(channels, dtype=np.complex128)
    cols = [np.asarray(h, dtype=np.complex128).ravel() for h in channels]
    return np.column_stack(cols)


def phase_insensitive_distance(h1, h2) -> float:
    """Chordal distance between the phase/scale classes of two channels.

    Computed as the norm of the phase-aligned difference of the normalized
    channels rather than sqrt(2 - 2 |corr|): the two are identical in exact
    arithmetic but the aligned form stays accurate (~1e-15) for
    near-identical channels where the sqrt form loses half the digits.
    """
    h1 = np.asarray(h1, dtype=np.complex128).ravel()
    h2 = np.asarray(h2, dtype=np.complex128).ravel()
    if h1.shape != h2.shape:
        raise ConfigError("channels must have equal length")
    n1 = np.linalg.norm(h1)
    n2 = np.linalg.norm(h2)
    if n1 == 0.0 or n2 == 0.0:
        raise ValueError("phase-insensitive distance undefined for a zero-norm channel")
    u = h1 / n1
    v = h2 / n2
    c = np.vdot(u, v)
    if abs(c) > 0.0:
        u = u * (c / abs(c))
    return float(min(np.linalg.norm(u - v), np.sqrt(2.0)))


def pairwise_distances(channels) -> np.ndarray:
    """Symmetric matrix of phase-insensitive distances, zero diagonal.

    Uses the Gram-matrix form sqrt(2 - 2 |corr|), which is a single matrix
    product; entries between near-identical channels carry ~1e-8 absolute
    noise (harmless for neighbor graphs, where the diagonal is exact).
    """
    H = _as_channel_matrix(channels)
    n = H.shape[1]
    if n < 2:
        raise ConfigError("need at least 2 channels for pairwise distances")
    norms = np.linalg.norm(H, axis=0)
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        raise ValueError(f"zero-norm channel at index {bad[0]}")
    Hn = H / norms
    corr = np.abs(Hn.conj().T @ Hn)
    corr = np.minimum(0.5 * (corr + corr.T), 1.0)
    dist = np.sqrt(np.maximum(2.0 - 2.0 * corr, 0.0))
    np.fill_diagonal(dist, 0.0)
    return dist


@dataclass
class NeighborGraph:
    """Symmetrized k-NN graph; keeps the full distance matrix for bridging."""

    n: int
    k: int
    weights: sp.csr_matrix       # symmetric adjacency, weight = distance
    dist: np.ndarray             # the full distance matrix the graph was built from


def knn_graph(dist: np.ndarray, k: int) -> NeighborGraph:
    """Union-symmetrized k-nearest-neighbor graph.

    Edge (i, j) exists iff j is among the k nearest of i or vice versa; ties
    at the k-th neighbor are broken toward the smaller index.
    """
    dist = np.asarray(dist, dtype=float)
    n = dist.shape[0]
    if k < 1:
        raise ConfigError("k must be >= 1")
    if k >= n:
        raise ConfigError(f"k={k} must be smaller than the number of nodes n={n}")
    masked = dist.copy()
    np.fill_diagonal(masked, np.inf)
    order = np.argsort(masked, axis=1, kind="stable")[:, :k]
    rows = np.repeat(np.arange(n), k)
    cols = order.ravel()
    w = dist[rows, cols]
    adj = sp.coo_matrix((w, (rows, cols)), shape=(n, n)).tocsr()
    sym = adj.maximum(adj.T)  # union of directed k-NN relations
    return NeighborGraph(n=n, k=k, weights=sym, dist=dist)


def geodesic_distances(graph: NeighborGraph) -> np.ndarray:
    """All-pairs shortest-path distances over the neighbor graph.

    A disconnected graph is repaired first: the globally closest pair of
    nodes in different components gets a direct edge (at its channel
    distance), repeated until one component remains, so every entry is
    finite.
    """
    weights = graph.weights.copy()
    while True:
        n_comp, labels = connected_components(weights, directed=False)
        if n_comp == 1:
            break
        cross = labels[:, None] != labels[None, :]
        masked = np.where(cross, graph.dist, np.inf)
        i, j = np.unravel_index(np.argmin(masked), masked.shape)
        weights = weights.tolil()
        weights[i, j] = graph.dist[i, j]
        weights[j, i] = graph.dist[i, j]
        weights = weights.tocsr()
    geo = shortest_path(weights, method="D", directed=False)
    return np.asarray(geo)


@dataclass
class Chart:
    """Low-dimensional chart locations, one column per calibration channel."""

    Z: np.ndarray            # d x N
    deficient: bool = False  # fewer nonnegative eigenvalues than dimensions

    @property
    def d(self) -> int:
        return self.Z.shape[0]

    @property
    def n(self) -> int:
        return self.Z.shape[1]


def classical_mds(dist: np.ndarray, d: int) -> Chart:
    """Embedding from a distance matrix via the double-centered Gram matrix.

    Rows of Z are sqrt(lambda_i) * v_i for the d largest eigenpairs; each
    row's sign is fixed so its first nonzero entry is nonnegative. Rows whose
    eigenvalue is negative are zeroed and flagged.
    """
    dist = np.asarray(dist, dtype=float)
    n = dist.shape[0]
    if not 1 <= d < n:
        raise ConfigError(f"target dimension d={d} must satisfy 1 <= d < n={n}")
    sq = dist * dist
    J = np.eye(n) - np.full((n, n), 1.0 / n)
    G = -0.5 * (J @ sq @ J)
    G = 0.5 * (G + G.T)
    evals, evecs = np.linalg.eigh(G)
    order = np.argsort(evals)[::-1][:d]
    evals = evals[order]
    evecs = evecs[:, order]

    Z = np.zeros((d, n))
    deficient = False
    tol = 1e-12 * max(float(np.abs(evals).max()), 1.0)
    for i in range(d):
        if evals[i] > tol:
            Z[i] = np.sqrt(evals[i]) * evecs[:, i]
        elif evals[i] < -tol:  # genuinely negative, not centering roundoff
            deficient = True
    if deficient:
        warnings.warn("distance matrix yields fewer nonnegative eigenvalues than "
                      "requested dimensions; remaining rows zero-padded", RuntimeWarning)

    for i in range(d):
        row = Z[i]
        nz = np.flatnonzero(np.abs(row) > 1e-12 * max(np.abs(row).max(), 1e-300))
        if nz.size and row[nz[0]] < 0.0:
            Z[i] = -row
    return Chart(Z=Z, deficient=deficient)


def isomap_init(channels, k: int, d: int) -> Chart:
    """ISOMAP chart of the calibration channels (k-NN geodesics + MDS)."""
    dist = pairwise_distances(channels)
    graph = knn_graph(dist, k)
    geo = geodesic_distances(graph)
    return classical_mds(geo, d)


def affine_alignment_error(Z: np.ndarray, positions: np.ndarray) -> float:
    """Mean residual of the best least-squares affine map chart -> positions.

    Used as the chart quality score: the value is in meters and is typically
    reported relative to the scene diagonal.
    """
    Z = np.asarray(Z, dtype=float)
    P = np.asarray(positions, dtype=float)
    if Z.shape[1] != P.shape[0]:
        raise ConfigError("chart and position counts differ")
    design = np.column_stack([Z.T, np.ones(Z.shape[1])])
    coef, *_ = np.linalg.lstsq(design, P, rcond=None)
    residual = design @ coef - P
    return float(np.mean(np.linalg.norm(residual, axis=1)))
