"""Spatial and demand statistics over design instances.

Every metric here is a ratio, so it is unchanged when all coordinates are
scaled by a common positive factor.
"""

from __future__ import annotations

import warnings

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree
from sklearn.cluster import DBSCAN
from sklearn.metrics import silhouette_score

from ..domains import get_domain
from ..instancegen import VALIDATION, Dataset, KnapsackInstance

MIN_SAMPLES = 4
MORAN_NEIGHBOURS = 5
EPS_PERCENTILE = 10

SCOPES = ("summary", "single_instance", "contrastive_pair")


class LeakageError(ValueError):
    """A validation dataset was handed to a design-time tool."""


class UnknownInstanceError(KeyError):
    pass


class ToolArgumentError(ValueError):
    pass


@dataclass(frozen=True)
class ToolOutput:
    text: str
    metrics: dict


def nn_distances(coords: np.ndarray) -> np.ndarray:
    d, _ = cKDTree(coords).query(coords, k=2)
    return d[:, 1]


def nn_statistics(coords) -> tuple[float, float, bool]:
    """(nn_cv, nn_mean_normalized, degenerate) of nearest-neighbour distances.

    The mean is divided by 0.5/sqrt(n), the expected nearest-neighbour
    distance for n uniform points on the unit square.
    """
    coords = np.asarray(coords, dtype=float)
    n = len(coords)
    if n < 2:
        raise ValueError("nearest-neighbour statistics need at least 2 points")
    d = nn_distances(coords)
    mean = d.mean()
    if mean == 0:
        return 0.0, 0.0, True
    return float(d.std() / mean), float(mean / (0.5 / np.sqrt(n))), False


def cluster_structure(coords) -> tuple[int, float | None, bool]:
    """(n_clusters, silhouette, degenerate) from density clustering.

    The neighbourhood radius is the 10th percentile of nearest-neighbour
    distances. Silhouette is computed over non-noise points when there are at
    least two clusters.
    """
    coords = np.asarray(coords, dtype=float)
    if len(coords) < 3:
        raise ValueError("cluster structure needs at least 3 points")
    eps = float(np.percentile(nn_distances(coords), EPS_PERCENTILE))
    if eps == 0:
        if np.all(coords == coords[0]):
            return 1, None, True
        eps = np.finfo(float).tiny
    labels = DBSCAN(eps=eps, min_samples=MIN_SAMPLES).fit(coords).labels_
    keep = labels >= 0
    k = len(set(labels[keep]))
    sil = None
    if k >= 2 and keep.sum() > k:
        sil = float(silhouette_score(coords[keep], labels[keep]))
    return k, sil, False


def density_and_hull(coords) -> tuple[float, float, float, bool]:
    """(density_cv, hull_fraction, hull_area_ratio, collinear).

    Density uses a g x g histogram over the bounding box with
    g = max(2, floor(sqrt(n)/2)). Collinear input has no hull area; it
    reports area ratio 0 and counts the two segment endpoints as the hull.
    """
    coords = np.asarray(coords, dtype=float)
    n = len(coords)
    if n < 3:
        raise ValueError("density and hull statistics need at least 3 points")
    lo, hi = coords.min(axis=0), coords.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    g = max(2, int(np.floor(np.sqrt(n) / 2)))
    cells = np.minimum(((coords - lo) / span * g).astype(int), g - 1)
    counts = np.bincount(cells[:, 0] * g + cells[:, 1], minlength=g * g)
    density_cv = float(counts.std() / counts.mean())
    try:
        hull = ConvexHull(coords)
    except QhullError:
        return density_cv, 2.0 / n, 0.0, True
    box = float(np.prod(hi - lo))
    return density_cv, len(hull.vertices) / n, float(hull.volume / box), False


def knn_weights(coords, k: int = MORAN_NEIGHBOURS) -> np.ndarray:
    """Binary k-nearest-neighbour weights (row i marks the k neighbours of i)."""
    coords = np.asarray(coords, dtype=float)
    n = len(coords)
    k = min(k, n - 1)
    _, idx = cKDTree(coords).query(coords, k=k + 1)
    W = np.zeros((n, n))
    rows = np.repeat(np.arange(n), k)
    # drop the self match; with duplicate points the self index may not come first
    nbrs = np.array([[j for j in r if j != i][:k] for i, r in enumerate(idx)])
    W[rows, nbrs.ravel()] = 1.0
    return W


def morans_i(values, W) -> float | None:
    z = np.asarray(values, dtype=float)
    z = z - z.mean()
    denom = (z * z).sum()
    if denom == 0:
        return None
    n = len(z)
    return float(n / W.sum() * (z @ W @ z) / denom)


def demand_pattern(coords, demands) -> tuple[float, float, bool]:
    """(demand_cv, morans_i, undefined) over customer nodes.

    Constant demands leave Moran's I undefined; it is then reported as 0 with
    the flag set.
    """
    coords = np.asarray(coords, dtype=float)
    d = np.asarray(demands, dtype=float)
    if len(d) < MORAN_NEIGHBOURS + 1:
        raise ValueError("demand pattern needs at least 6 customers")
    cv = float(d.std() / d.mean()) if d.mean() else 0.0
    i = morans_i(d, knn_weights(coords))
    return cv, (0.0 if i is None else i), i is None


@dataclass
class InstanceFeatureSummary:
    nn_cv: float | None = None
    nn_mean_normalized: float | None = None
    n_clusters: int | None = None
    silhouette: float | None = None
    density_cv: float | None = None
    hull_fraction: float | None = None
    hull_area_ratio: float | None = None
    demand_cv: float | None = None
    demand_morans_i: float | None = None
    # knapsack instances carry no geometry; these describe the item table instead
    value_cv: float | None = None
    weight_cv: float | None = None
    value_weight_correlation: float | None = None
    flags: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


FEATURES = (
    "nn_cv", "nn_mean_normalized", "n_clusters", "silhouette", "density_cv", "hull_fraction",
    "hull_area_ratio", "demand_cv", "demand_morans_i", "value_cv", "weight_cv", "value_weight_correlation",
)


def instance_features(domain: str, instance) -> InstanceFeatureSummary:
    s = InstanceFeatureSummary()
    if isinstance(instance, KnapsackInstance):
        v, w = instance.values, instance.weights
        s.value_cv = float(v.std() / v.mean())
        s.weight_cv = float(w.std() / w.mean())
        s.value_weight_correlation = float(np.corrcoef(v, w.mean(axis=1))[0, 1]) if len(v) > 1 else None
        return s
    coords = np.asarray(instance.coordinates)
    s.nn_cv, s.nn_mean_normalized, degen = nn_statistics(coords)
    if degen:
        s.flags.append("coincident points")
    s.n_clusters, s.silhouette, degen = cluster_structure(coords)
    s.density_cv, s.hull_fraction, s.hull_area_ratio, collinear = density_and_hull(coords)
    if collinear:
        s.flags.append("collinear points")
    if get_domain(domain).has_demands and instance.n - 1 <= MORAN_NEIGHBOURS:
        s.flags.append("too few customers for demand statistics")
    elif get_domain(domain).has_demands:
        s.demand_cv, s.demand_morans_i, undefined = demand_pattern(coords[1:], instance.demands[1:])
        if undefined:
            s.flags.append("moran undefined: constant demands")
    return s


def _require_design(dataset: Dataset):
    if dataset.role == VALIDATION:
        raise LeakageError("diagnostic tools only accept the design dataset")


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{v:.4f}"


def aggregate(summaries: list[InstanceFeatureSummary]) -> dict:
    out = {}
    for name in FEATURES:
        vals = [getattr(s, name) for s in summaries if getattr(s, name) is not None]
        if vals:
            out[name] = {"mean": float(np.mean(vals)), "min": float(np.min(vals)), "max": float(np.max(vals))}
    return out


def _feature_matrix(summaries) -> np.ndarray:
    return np.array([[np.nan if getattr(s, f) is None else float(getattr(s, f)) for f in FEATURES]
                     for s in summaries])


def contrastive_pair(dataset: Dataset, summaries=None, top: int = 3) -> dict:
    """Most dissimilar pair of instances under z-scored features, with the widest feature gaps."""
    summaries = summaries or [instance_features(dataset.domain, i) for i in dataset]
    if len(summaries) < 2:
        raise ToolArgumentError("contrastive_pair needs at least two instances")
    X = _feature_matrix(summaries)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-absent columns
        mu, sd = np.nanmean(X, axis=0), np.nanstd(X, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        Z = np.where(sd > 0, (X - mu) / sd, 0.0)
    Z = np.nan_to_num(Z, nan=0.0)
    dist = np.sqrt(((Z[:, None, :] - Z[None, :, :]) ** 2).sum(axis=-1))
    i, j = np.unravel_index(int(dist.argmax()), dist.shape)
    i, j = (int(i), int(j)) if i < j else (int(j), int(i))
    diffs = np.abs(Z[i] - Z[j])
    order = sorted(range(len(FEATURES)), key=lambda f: (-diffs[f], f))[:top]
    gaps = [{"feature": FEATURES[f], "a": X[i, f] if not np.isnan(X[i, f]) else None,
             "b": X[j, f] if not np.isnan(X[j, f]) else None, "z_gap": float(diffs[f])}
            for f in order if diffs[f] > 0]
    return {"a": dataset[i].id, "b": dataset[j].id, "distance": float(dist[i, j]), "gaps": gaps}


def analyze_instances(dataset: Dataset, scope: str = "summary", instance_id: str | None = None) -> ToolOutput:
    """Instance analysis tool over the design set."""
    _require_design(dataset)
    if scope not in SCOPES:
        raise ToolArgumentError(f"scope must be one of {', '.join(SCOPES)}")
    if scope == "single_instance":
        if not instance_id:
            raise ToolArgumentError("scope 'single_instance' requires instance_id")
        try:
            inst = dataset.by_id(instance_id)
        except KeyError:
            raise UnknownInstanceError(f"no design instance with id {instance_id!r}") from None
        s = instance_features(dataset.domain, inst)
        lines = [f"Instance {inst.id} (n={inst.n}):"]
        lines += [f"  {f}: {_fmt(getattr(s, f))}" for f in FEATURES if getattr(s, f) is not None]
        if s.flags:
            lines.append("  flags: " + "; ".join(s.flags))
        return ToolOutput("\n".join(lines), {"scope": scope, "instance_id": inst.id, "features": s.as_dict()})
    if instance_id:
        raise ToolArgumentError(f"scope '{scope}' does not take instance_id")
    summaries = [instance_features(dataset.domain, i) for i in dataset]
    if scope == "summary":
        agg = aggregate(summaries)
        lines = [f"Design set: {len(dataset)} instances of {dataset.domain}, size {dataset.n}.",
                 "metric: mean [min, max]"]
        lines += [f"  {k}: {_fmt(v['mean'])} [{_fmt(v['min'])}, {_fmt(v['max'])}]" for k, v in agg.items()]
        flags = sorted({f for s in summaries for f in s.flags})
        if flags:
            lines.append("flags seen: " + "; ".join(flags))
        return ToolOutput("\n".join(lines), {"scope": scope, "count": len(dataset), "aggregate": agg})
    pair = contrastive_pair(dataset, summaries)
    lines = [f"Most dissimilar pair: {pair['a']} vs {pair['b']} (standardized distance {pair['distance']:.3f})."]
    lines += [f"  {g['feature']}: {_fmt(g['a'])} vs {_fmt(g['b'])} (|z| gap {g['z_gap']:.2f})" for g in pair["gaps"]]
    return ToolOutput("\n".join(lines), {"scope": scope, **pair})
