"""Road network as a hypergraph and its normalized convolution operator.

Each road segment contributes one hyperedge containing itself plus its
k nearest neighbors by geographic distance. The spatial mixing matrix
used by the model is

    G_op = Dv^{-1/2} H W De^{-1} H^T Dv^{-1/2}

with incidence H, hyperedge weights W (identity by default), vertex
degrees Dv and hyperedge degrees De.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

#: Sentinel for "every vertex is a neighbor" in :func:`build_hypergraph`.
ALL_NEIGHBORS = "all"

EARTH_RADIUS_MILES = 3958.7613


@dataclass(frozen=True)
class RoadNetwork:
    """Corridor geometry: segment ids plus pairwise distances in miles."""

    segment_ids: tuple[str, ...]
    distance: np.ndarray
    adjacency: np.ndarray | None = None

    def __post_init__(self):
        ids = tuple(str(s) for s in self.segment_ids)
        object.__setattr__(self, "segment_ids", ids)
        dist = np.asarray(self.distance, dtype=np.float64)
        n = len(ids)
        if n < 1:
            raise DataError("network needs at least one segment")
        if len(set(ids)) != n:
            raise DataError("duplicate segment ids")
        if dist.shape != (n, n):
            raise DataError(f"distance matrix shape {dist.shape} != ({n}, {n})")
        if np.any(dist < 0):
            raise DataError("distances must be nonnegative")
        if np.any(np.diagonal(dist) != 0):
            raise DataError("distance diagonal must be zero")
        object.__setattr__(self, "distance", dist)
        if self.adjacency is not None:
            adj = np.asarray(self.adjacency, dtype=np.float64)
            if adj.shape != (n, n):
                raise DataError(f"adjacency shape {adj.shape} != ({n}, {n})")
            if not np.all(np.isin(adj, (0.0, 1.0))):
                raise DataError("adjacency entries must be 0 or 1")
            object.__setattr__(self, "adjacency", adj)

    @property
    def n_segments(self) -> int:
        return len(self.segment_ids)

    def index_of(self, segment_id: str) -> int:
        try:
            return self.segment_ids.index(str(segment_id))
        except ValueError:
            raise DataError(f"unknown segment id '{segment_id}'") from None


@dataclass(frozen=True)
class Hypergraph:
    """Incidence structure with per-edge weights and derived degrees."""

    incidence: np.ndarray
    edge_weights: np.ndarray
    vertex_degrees: np.ndarray = field(init=False)
    edge_degrees: np.ndarray = field(init=False)

    def __post_init__(self):
        h = np.asarray(self.incidence, dtype=np.float64)
        w = np.asarray(self.edge_weights, dtype=np.float64)
        if h.ndim != 2:
            raise DataError("incidence must be an N x E matrix")
        if not np.all(np.isin(h, (0.0, 1.0))):
            raise DataError("incidence entries must be 0 or 1")
        if w.shape != (h.shape[1],):
            raise DataError(f"need one weight per hyperedge, got {w.shape}")
        if np.any(w <= 0):
            raise DataError("hyperedge weights must be positive")
        edge_deg = h.sum(axis=0)
        if np.any(edge_deg == 0):
            raise DataError("empty hyperedge")
        vertex_deg = (h * w).sum(axis=1)
        if np.any(h.sum(axis=1) == 0):
            raise DataError("vertex belongs to no hyperedge")
        object.__setattr__(self, "incidence", h)
        object.__setattr__(self, "edge_weights", w)
        object.__setattr__(self, "vertex_degrees", vertex_deg)
        object.__setattr__(self, "edge_degrees", edge_deg)

    @property
    def n_vertices(self) -> int:
        return self.incidence.shape[0]

    @property
    def n_edges(self) -> int:
        return self.incidence.shape[1]


def build_hypergraph(network: RoadNetwork, k: "int | str") -> Hypergraph:
    """One hyperedge per segment: the segment plus its k nearest neighbors.

    Distance ties are broken by ascending segment index so construction
    is deterministic. ``k=ALL_NEIGHBORS`` (or the string "all") puts
    every vertex in every hyperedge. All edge weights are 1.
    """
    n = network.n_segments
    if isinstance(k, str):
        if k.lower() != ALL_NEIGHBORS:
            raise ConfigError(f"neighbor count must be an int or '{ALL_NEIGHBORS}', got '{k}'")
        k = n - 1
    else:
        k = int(k)
        if not 1 <= k <= n - 1:
            raise ConfigError(f"neighbor count {k} outside [1, {n - 1}]")

    incidence = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        # stable sort on distance keeps ascending-index order among ties
        order = np.argsort(network.distance[i], kind="stable")
        members = [j for j in order if j != i][:k]
        incidence[i, i] = 1.0
        incidence[members, i] = 1.0
    return Hypergraph(incidence=incidence, edge_weights=np.ones(n))


def hypergraph_operator(hg: Hypergraph) -> np.ndarray:
    """Normalized mixing matrix Dv^{-1/2} H W De^{-1} H^T Dv^{-1/2}.

    Symmetric when all edge weights are equal; Dv^{1/2}·1 is a fixed
    vector of the operator.
    """
    if np.any(hg.vertex_degrees <= 0):
        raise DataError("isolated segment: vertex with zero degree")
    h = hg.incidence
    dv_inv_sqrt = 1.0 / np.sqrt(hg.vertex_degrees)
    de_inv = 1.0 / hg.edge_degrees
    # (Dv^-1/2 H) W De^-1 (H^T Dv^-1/2), kept dense: corridors are small
    left = h * dv_inv_sqrt[:, None]
    return (left * (hg.edge_weights * de_inv)[None, :]) @ left.T


def chebyshev_term(k: int, x: float) -> float:
    """Chebyshev polynomial T_k(x) via T_k = 2x·T_{k-1} − T_{k-2}."""
    if k < 0:
        raise ConfigError("order k must be nonnegative")
    if k == 0:
        return 1.0
    prev, cur = 1.0, float(x)
    for _ in range(k - 1):
        prev, cur = cur, 2.0 * x * cur - prev
    return cur


# -- geometry and file formats --------------------------------------------


def haversine_miles(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance between two lat/lon points, in miles."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2.0 * EARTH_RADIUS_MILES * math.asin(math.sqrt(a))


def network_from_latlon(segment_ids, lats, lons) -> RoadNetwork:
    """Build the distance matrix from per-segment coordinates."""
    lats = np.asarray(lats, dtype=np.float64)
    lons = np.asarray(lons, dtype=np.float64)
    n = len(segment_ids)
    if lats.shape != (n,) or lons.shape != (n,):
        raise DataError("need one lat/lon pair per segment")
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = haversine_miles(lats[i], lons[i], lats[j], lons[j])
            dist[i, j] = dist[j, i] = d
    return RoadNetwork(segment_ids=tuple(segment_ids), distance=dist)


def load_distance_csv(path) -> RoadNetwork:
    """Read an N x N distance matrix whose header row names the segments."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if header and header[0] == "":
        header = header[1:]
        body = [r[1:] for r in rows[1:]]
    else:
        body = rows[1:]
    n = len(header)
    if len(body) != n:
        raise DataError(f"{path}: {len(body)} data rows for {n} header columns")
    try:
        dist = np.array([[float(c) for c in row] for row in body], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric distance cell ({exc})") from None
    return RoadNetwork(segment_ids=tuple(header), distance=dist)


def load_segments_csv(path) -> RoadNetwork:
    """Read `segment_id,lat,lon` rows and derive haversine distances."""
    ids, lats, lons = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"segment_id", "lat", "lon"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataError(f"{path}: expected columns segment_id,lat,lon")
        for row in reader:
            ids.append(row["segment_id"].strip())
            try:
                lats.append(float(row["lat"]))
                lons.append(float(row["lon"]))
            except ValueError:
                raise DataError(f"{path}: bad coordinate for segment '{row['segment_id']}'") from None
    return network_from_latlon(ids, lats, lons)
