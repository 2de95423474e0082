"""Multi-scale teleconnection networks.

Each location's series is split with a Haar maximal-overlap wavelet
transform into detail levels ``j = 1..J``; level ``j`` captures periods of
roughly ``2**j`` to ``2**(j+1)`` weeks. Temporal *scale* ``s`` refers to
level ``j = s - 2`` (scale 3 is 2-4 weeks, scale 9 is 128-256 weeks).
Per scale, locations are linked when the absolute Pearson correlation of
their detail coefficients reaches a threshold.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data.grid import GridSeries, Location
from .errors import DataError

DEFAULT_THRESHOLD = 0.8

# coarse lat/lon boxes used to tag edge endpoints: (lat_min, lat_max, lon_min, lon_max)
REGIONS: dict[str, tuple[float, float, float, float]] = {
    "arctic": (66.5, 90.0, -180.0, 180.0),
    "antarctica": (-90.0, -60.0, -180.0, 180.0),
    "north_america": (7.0, 66.5, -170.0, -50.0),
    "south_america": (-60.0, 7.0, -92.0, -30.0),
    "europe": (35.0, 66.5, -25.0, 45.0),
    "africa": (-35.0, 35.0, -20.0, 52.0),
    "asia": (0.0, 66.5, 45.0, 180.0),
    "oceania": (-50.0, 0.0, 100.0, 180.0),
}


class ScaleError(DataError):
    pass


class ZeroVarianceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ScaleDecomposition:
    details: list[np.ndarray]  # details[j-1] is level j, each T x N
    smooth: np.ndarray

    @property
    def levels(self) -> int:
        return len(self.details)

    def reconstruct(self) -> np.ndarray:
        return sum(self.details, start=np.zeros_like(self.smooth)) + self.smooth


@dataclass(frozen=True)
class ScaleNetwork:
    scale: int
    similarity: np.ndarray
    adjacency: np.ndarray
    threshold: float

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(np.int64)

    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency, k=1))
        return list(zip(i.tolist(), j.tolist()))


def scale_to_level(scale: int) -> int:
    return scale - 2


def scale_band(scale: int) -> tuple[int, int]:
    """Period band in weeks covered by ``scale``."""
    return 2 ** (scale - 2), 2 ** (scale - 1)


def required_length(scale: int) -> int:
    """Shortest series for which ``scale`` yields a similarity matrix."""
    # 2**j boundary coefficients are dropped; keep at least 3 for a correlation
    return 2 ** scale_to_level(scale) + 3


def modwt(series: GridSeries | np.ndarray, levels: int) -> ScaleDecomposition:
    """Haar MODWT with circular boundary.

    Level ``j`` uses the Haar filters upsampled by ``2**(j-1)``:
    ``W_j[t] = (V[t] - V[t - 2**(j-1)]) / 2`` and
    ``V_j[t] = (V[t] + V[t - 2**(j-1)]) / 2``. For Haar these coefficients
    are additive, ``X = sum_j W_j + V_J``.
    """
    x = series.values if isinstance(series, GridSeries) else np.asarray(series, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    T = x.shape[0]
    if levels < 1:
        raise ScaleError("levels must be >= 1")
    if T < 2 ** levels:
        raise ScaleError(f"{levels} levels need at least {2 ** levels} time steps, series has {T}")
    v = x.astype(np.float64, copy=True)
    details = []
    for j in range(1, levels + 1):
        lagged = np.roll(v, 2 ** (j - 1), axis=0)
        details.append(0.5 * (v - lagged))
        v = 0.5 * (v + lagged)
    return ScaleDecomposition(details, v)


def zero_variance_locations(decomp: ScaleDecomposition, scale: int) -> list[int]:
    coeffs = _level_coeffs(decomp, scale)
    return np.nonzero(coeffs.std(axis=0) == 0)[0].tolist()


def _level_coeffs(decomp: ScaleDecomposition, scale: int) -> np.ndarray:
    j = scale_to_level(scale)
    if not 1 <= j <= decomp.levels:
        raise ScaleError(
            f"scale {scale} needs detail level {j}; decomposition has levels 1..{decomp.levels}"
        )
    coeffs = decomp.details[j - 1][2 ** j:]
    if coeffs.shape[0] < 3:
        raise ScaleError(
            f"scale {scale} needs a series of at least {required_length(scale)} steps"
        )
    return coeffs


def scale_similarity(decomp: ScaleDecomposition, scale: int) -> np.ndarray:
    """Pearson correlation of detail coefficients between all location pairs.

    The first ``2**j`` coefficients (wrapped by the circular filter) are
    dropped. Pairs involving a zero-variance location get similarity 0 and a
    :class:`ZeroVarianceWarning` is issued; the diagonal is always 1.
    """
    coeffs = _level_coeffs(decomp, scale)
    centered = coeffs - coeffs.mean(axis=0)
    norms = np.sqrt(np.sum(centered * centered, axis=0))
    flat = norms == 0
    safe = np.where(flat, 1.0, norms)
    unit = centered / safe
    sim = np.clip(unit.T @ unit, -1.0, 1.0)
    sim = 0.5 * (sim + sim.T)
    sim[flat, :] = 0.0
    sim[:, flat] = 0.0
    np.fill_diagonal(sim, 1.0)
    if flat.any():
        warnings.warn(
            f"scale {scale}: zero-variance locations {np.nonzero(flat)[0].tolist()} "
            "have similarity 0",
            ZeroVarianceWarning,
            stacklevel=2,
        )
    return sim


def build_network(similarity: np.ndarray, threshold: float = DEFAULT_THRESHOLD, scale: int = 0) -> ScaleNetwork:
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    similarity = np.asarray(similarity, dtype=np.float64)
    adj = np.abs(similarity) >= threshold
    adj = adj & adj.T
    np.fill_diagonal(adj, False)
    return ScaleNetwork(scale, similarity, adj, threshold)


def degree_heatmap(network: ScaleNetwork, locations: list[Location]) -> list[dict]:
    degrees = network.degrees
    return [
        {"id": loc.id, "lat": loc.lat, "lon": loc.lon, "degree": int(degrees[i]), "scale": network.scale}
        for i, loc in enumerate(locations)
    ]


def region_of(loc: Location) -> str:
    for name, (la0, la1, lo0, lo1) in REGIONS.items():
        if la0 <= loc.lat <= la1 and lo0 <= loc.lon <= lo1:
            return name
    return "other"


def in_box(loc: Location, box: tuple[float, float, float, float]) -> bool:
    la0, la1, lo0, lo1 = box
    return la0 <= loc.lat <= la1 and lo0 <= loc.lon <= lo1


def connection_map(
    network: ScaleNetwork,
    locations: list[Location],
    region: tuple[float, float, float, float],
) -> list[dict]:
    """Edges whose source lies inside ``region`` (lat_min, lat_max, lon_min, lon_max).

    Each edge within the region appears once per direction, since both
    endpoints qualify as source.
    """
    sources = [i for i, loc in enumerate(locations) if in_box(loc, region)]
    if not sources:
        warnings.warn(f"no locations inside region {region}", stacklevel=2)
    edges = []
    for i in sources:
        for j in np.nonzero(network.adjacency[i])[0].tolist():
            src, dst = locations[i], locations[j]
            edges.append(
                {
                    "src_id": src.id,
                    "dst_id": dst.id,
                    "src_lat": src.lat,
                    "src_lon": src.lon,
                    "dst_lat": dst.lat,
                    "dst_lon": dst.lon,
                    "dst_region": region_of(dst),
                    "scale": network.scale,
                    "similarity": float(network.similarity[i, j]),
                }
            )
    return edges
