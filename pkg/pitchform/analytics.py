"""
Game-start forms, Ward clustering, the statistics baseline and reports.
"""
import bisect
import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib
import numpy as np
import pandas as pd
import torch
from matplotlib.figure import Figure
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score

from pitchform.dataset import DatasetConfig, FeatureStore, FormView, assemble_views
from pitchform.errors import EmptyInput, InsufficientHistory, KeyMismatch, SequenceOverflow, UnknownPlayer
from pitchform.ingest import Corpus
from pitchform.manifest import atomic_path
from pitchform.model import FORM_DIM, FormModel, batch_tensors
from pitchform.stats import PcaModel, SupplementalTable, pca_fit, pca_transform

logger = logging.getLogger(__name__)

Key = Tuple[int, int]  # (player_id, game_pk)

DEFAULT_K = 16
DEFAULT_STAT_DIM = 32
LINEUP_SIZE = 9
FORM_COLUMNS = [f"z{i}" for i in range(FORM_DIM)]


# -------------------------------------------------------------------
# Game-start forms
# -------------------------------------------------------------------

@dataclass(frozen=True)
class GameStartForm:
    player_id: int
    game_pk: int
    role: str
    form: np.ndarray  # (72,), unit norm
    at_bats: Tuple[int, ...] = ()  # corpus at-bat indices of the source view

    @property
    def key(self) -> Key:
        return (self.player_id, self.game_pk)


def game_starters(corpus: Corpus, game_pk: int, role: str) -> List[int]:
    """Both teams' starting nine (batters) or the two starting pitchers, in order of first appearance."""
    seen: Dict[str, List[int]] = {}
    for i in corpus.game_at_bats(game_pk):
        ab = corpus.at_bats[i]
        side = seen.setdefault(ab.half, [])
        player = ab.batter_id if role == "batter" else ab.pitcher_id
        limit = LINEUP_SIZE if role == "batter" else 1
        if player not in side and len(side) < limit:
            side.append(player)
    return [p for half in sorted(seen) for p in seen[half]]


def embed_views(model: FormModel, views: Sequence[FormView], max_len: int, pad_id: int,
                batch_size: int = 64) -> np.ndarray:
    """(n, 72) unit-norm forms; eval mode, no dropout."""
    out = np.zeros((len(views), FORM_DIM), dtype=np.float64)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        for lo in range(0, len(views), batch_size):
            chunk = views[lo:lo + batch_size]
            forms = model(batch_tensors(assemble_views(chunk, max_len, pad_id)))["forms"]
            out[lo:lo + len(chunk)] = forms.double().numpy()
    model.train(was_training)
    return out


def game_start_forms(store: FeatureStore, model: FormModel, config: DatasetConfig,
                     games: Optional[Sequence[int]] = None, batch_size: int = 64) -> List[GameStartForm]:
    """
    One form per (starter, game) from the view of at-bats right before the
    game. Starters without a full view of history are skipped.
    """
    corpus = store.corpus
    role = config.role
    views: List[FormView] = []
    keys: List[Key] = []
    skipped = 0
    for game_pk in sorted(games if games is not None else corpus.games):
        for player_id in game_starters(corpus, game_pk, role):
            try:
                views.append(store.view_before(player_id, role, game_pk, config.view_size, config.max_len))
            except (InsufficientHistory, SequenceOverflow) as e:
                logger.debug("no game-start form: %s", e)
                skipped += 1
                continue
            keys.append((player_id, game_pk))
    logger.info("%d %s game-start views, %d starters skipped", len(views), role, skipped)
    forms = embed_views(model, views, config.max_len, store.vocab.pad_id, batch_size)
    return [
        GameStartForm(player_id, game_pk, role, forms[i], views[i].at_bats)
        for i, (player_id, game_pk) in enumerate(keys)
    ]


def write_forms(forms: Sequence[GameStartForm], path: str) -> None:
    frame = pd.DataFrame(
        [f.form for f in forms] if forms else np.zeros((0, FORM_DIM)), columns=FORM_COLUMNS
    )
    frame.insert(0, "role", [f.role for f in forms])
    frame.insert(0, "game_pk", [f.game_pk for f in forms])
    frame.insert(0, "player_id", [f.player_id for f in forms])
    with atomic_path(path) as tmp:
        frame.to_csv(tmp, index=False, lineterminator="\n", float_format="%.9g")


def read_forms(path: str) -> List[GameStartForm]:
    frame = pd.read_csv(path, dtype={"role": str})
    vectors = frame[FORM_COLUMNS].to_numpy(np.float64)
    return [
        GameStartForm(int(pid), int(game), role, vectors[i])
        for i, (pid, game, role) in enumerate(zip(frame["player_id"], frame["game_pk"], frame["role"]))
    ]


def mean_cosine_by_group(vectors: np.ndarray, groups: Sequence) -> Tuple[float, float]:
    """Mean cosine similarity within groups and between groups (self-pairs excluded)."""
    X = np.asarray(vectors, dtype=np.float64)
    X = X / np.maximum(np.linalg.norm(X, axis=1, keepdims=True), 1e-12)
    sim = X @ X.T
    labels = np.asarray(groups)
    same = labels[:, None] == labels[None, :]
    off_diagonal = ~np.eye(len(X), dtype=bool)
    within = sim[same & off_diagonal]
    between = sim[~same]
    return (float(within.mean()) if within.size else 0.0, float(between.mean()) if between.size else 0.0)


# -------------------------------------------------------------------
# Ward clustering
# -------------------------------------------------------------------

@dataclass(frozen=True)
class Merge:
    a: int  # smaller cluster id
    b: int
    cost: float  # increase in within-cluster sum of squares
    size: int


@dataclass(frozen=True)
class Dendrogram:
    n_leaves: int
    merges: Tuple[Merge, ...]

    @property
    def costs(self) -> np.ndarray:
        return np.array([m.cost for m in self.merges], dtype=np.float64)

    def scipy_heights(self) -> np.ndarray:
        """Merge heights on scipy's Ward scale, sqrt(2 * cost)."""
        return np.sqrt(2.0 * self.costs)


@dataclass(frozen=True)
class ClusterAssignment:
    keys: Tuple[Key, ...]
    labels: np.ndarray  # dense 0..k-1
    k: int
    method: str

    def __len__(self) -> int:
        return len(self.keys)

    def as_dict(self) -> Dict[Key, int]:
        return {key: int(label) for key, label in zip(self.keys, self.labels)}

    def players(self) -> List[int]:
        return sorted({player for player, _ in self.keys})

    def timeline(self, player_id: int) -> List[Tuple[int, int]]:
        """(game_pk, cluster) in game order."""
        rows = sorted((game, int(label)) for (player, game), label in zip(self.keys, self.labels) if player == player_id)
        if not rows:
            raise UnknownPlayer(player_id)
        return rows


def ward_costs(size_a: float, centroid_a: np.ndarray, sizes: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Ward merge cost of cluster a with each row: n_a n_b / (n_a + n_b) * |c_a - c_b|^2."""
    diff = centroids - centroid_a
    return size_a * sizes / (size_a + sizes) * np.sum(diff * diff, axis=1)


def merged_centroid(size_a: float, centroid_a: np.ndarray, size_b: float, centroid_b: np.ndarray) -> np.ndarray:
    return (size_a * centroid_a + size_b * centroid_b) / (size_a + size_b)


def ward_linkage(X: np.ndarray) -> Dendrogram:
    """
    Full Ward merge sequence. Leaves are ids 0..n-1, merge t creates id n+t.
    Among equal-cost pairs the lexicographically smallest (id_a, id_b) merges first.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyInput(f"need a non-empty (n, d) matrix, got shape {X.shape}")
    n = len(X)
    centroids = X.copy()
    sizes = np.ones(n, dtype=np.float64)
    ids = np.arange(n)  # slot -> cluster id
    active = np.ones(n, dtype=bool)
    cost = np.full((n, n), np.inf)
    for i in range(n - 1):
        cost[i, i + 1:] = ward_costs(sizes[i], centroids[i], sizes[i + 1:], centroids[i + 1:])

    merges: List[Merge] = []
    for t in range(n - 1):
        best = cost.min()
        candidates = np.argwhere(cost == best)
        pairs = [tuple(sorted((int(ids[i]), int(ids[j])))) + (int(i), int(j)) for i, j in candidates]
        a, b, si, sj = min(pairs)
        slot_a, slot_b = (si, sj) if ids[si] == a else (sj, si)
        size = sizes[slot_a] + sizes[slot_b]
        merges.append(Merge(a, b, float(best), int(size)))

        centroids[slot_a] = merged_centroid(sizes[slot_a], centroids[slot_a], sizes[slot_b], centroids[slot_b])
        sizes[slot_a] = size
        ids[slot_a] = n + t
        active[slot_b] = False
        cost[slot_b, :] = np.inf
        cost[:, slot_b] = np.inf
        others = np.flatnonzero(active)
        others = others[others != slot_a]
        if len(others):
            values = ward_costs(sizes[slot_a], centroids[slot_a], sizes[others], centroids[others])
            below = others < slot_a
            cost[others[below], slot_a] = values[below]
            cost[slot_a, others[~below]] = values[~below]
    return Dendrogram(n, tuple(merges))


def ward_reference(X: np.ndarray) -> Dendrogram:
    """Exhaustive O(n^3) Ward: every active pair is re-scored at every step."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyInput(f"need a non-empty (n, d) matrix, got shape {X.shape}")
    n = len(X)
    clusters = {i: (1.0, X[i].copy()) for i in range(n)}
    merges: List[Merge] = []
    next_id = n
    while len(clusters) > 1:
        best, pair = np.inf, None
        active = sorted(clusters)
        for idx, a in enumerate(active):
            size_a, centroid_a = clusters[a]
            for b in active[idx + 1:]:
                size_b, centroid_b = clusters[b]
                cost = ward_costs(size_a, centroid_a, np.array([size_b]), centroid_b[None, :])[0]
                if cost < best:
                    best, pair = cost, (a, b)
        a, b = pair
        (size_a, centroid_a), (size_b, centroid_b) = clusters.pop(a), clusters.pop(b)
        clusters[next_id] = (size_a + size_b, merged_centroid(size_a, centroid_a, size_b, centroid_b))
        merges.append(Merge(a, b, float(best), int(size_a + size_b)))
        next_id += 1
    return Dendrogram(n, tuple(merges))


def cut_dendrogram(dendrogram: Dendrogram, k: int) -> np.ndarray:
    """Labels after the first n-k merges, numbered by each cluster's smallest leaf."""
    n = dendrogram.n_leaves
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    members: Dict[int, List[int]] = {i: [i] for i in range(n)}
    for t, merge in enumerate(dendrogram.merges[:n - k]):
        members[n + t] = members.pop(merge.a) + members.pop(merge.b)
    labels = np.zeros(n, dtype=np.int64)
    for label, leaves in enumerate(sorted(members.values(), key=min)):
        labels[leaves] = label
    return labels


def _default_keys(n: int) -> Tuple[Key, ...]:
    return tuple((i, 0) for i in range(n))


def ward_cluster(X: np.ndarray, k: int, keys: Optional[Sequence[Key]] = None,
                 method: str = "form") -> Tuple[Dendrogram, ClusterAssignment]:
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        raise EmptyInput("no points to cluster")
    if not 1 <= k <= len(X):
        raise ValueError(f"k must be in [1, {len(X)}], got {k}")
    keys = tuple(keys) if keys is not None else _default_keys(len(X))
    if len(keys) != len(X):
        raise ValueError(f"{len(keys)} keys for {len(X)} points")
    dendrogram = ward_linkage(X)
    return dendrogram, ClusterAssignment(keys, cut_dendrogram(dendrogram, k), k, method)


def assignment_from_labels(keys: Sequence[Key], labels: Sequence, method: str) -> ClusterAssignment:
    """Dense relabeling of arbitrary labels in order of first appearance."""
    dense: Dict = {}
    values = np.array([dense.setdefault(label, len(dense)) for label in labels], dtype=np.int64)
    return ClusterAssignment(tuple(keys), values, len(dense), method)


def write_dendrogram(dendrogram: Dendrogram, path: str) -> None:
    frame = pd.DataFrame(
        [(t, m.a, m.b, m.cost, m.size) for t, m in enumerate(dendrogram.merges)],
        columns=["step", "a", "b", "cost", "size"],
    )
    with atomic_path(path) as tmp:
        frame.to_csv(tmp, index=False, lineterminator="\n", float_format="%.17g")


def read_dendrogram(path: str) -> Dendrogram:
    frame = pd.read_csv(path)
    merges = tuple(Merge(int(a), int(b), float(c), int(s))
                   for a, b, c, s in zip(frame["a"], frame["b"], frame["cost"], frame["size"]))
    return Dendrogram(len(merges) + 1, merges)


def write_assignments(assignments: Sequence[ClusterAssignment], path: str) -> None:
    rows = [
        (player, game, a.method, a.k, int(label))
        for a in assignments for (player, game), label in zip(a.keys, a.labels)
    ]
    frame = pd.DataFrame(rows, columns=["player_id", "game_pk", "method", "k", "cluster"])
    frame = frame.sort_values(["method", "player_id", "game_pk"], kind="stable")
    with atomic_path(path) as tmp:
        frame.to_csv(tmp, index=False, lineterminator="\n")


def read_assignments(path: str) -> Dict[str, ClusterAssignment]:
    frame = pd.read_csv(path, dtype={"method": str})
    out = {}
    for method, group in frame.groupby("method", sort=True):
        keys = tuple(zip(group["player_id"].astype(int), group["game_pk"].astype(int)))
        out[method] = ClusterAssignment(keys, group["cluster"].to_numpy(np.int64), int(group["k"].iloc[0]), method)
    return out


# -------------------------------------------------------------------
# Statistics baseline
# -------------------------------------------------------------------

def first_at_bat_in_game(corpus: Corpus, player_id: int, role: str, game_pk: int) -> int:
    appearances = corpus.appearances(player_id, role)
    if not appearances:
        raise UnknownPlayer(player_id, role)
    games = [corpus.at_bats[i].game_pk for i in appearances]
    p = bisect.bisect_left(games, game_pk)
    if p == len(games) or games[p] != game_pk:
        raise ValueError(f"{role} {player_id} did not appear in game {game_pk}")
    return appearances[p]


def stat_vectors(corpus: Corpus, table: SupplementalTable, keys: Sequence[Key], role: str) -> np.ndarray:
    """Supplemental values at each player's first at-bat of the game, this_game blocks dropped."""
    columns = table.layout.columns(exclude_scales=["this_game"])
    rows = [first_at_bat_in_game(corpus, player, role, game) for player, game in keys]
    return table.values[np.asarray(rows, dtype=np.int64)][:, columns] if rows else np.zeros((0, len(columns)))


def stat_baseline_vectors(corpus: Corpus, table: SupplementalTable, keys: Sequence[Key], role: str,
                          n_components: int = DEFAULT_STAT_DIM) -> Tuple[np.ndarray, PcaModel]:
    vectors = stat_vectors(corpus, table, keys, role)
    pca = pca_fit(vectors, n_components)
    return pca_transform(pca, vectors), pca


# -------------------------------------------------------------------
# Reports
# -------------------------------------------------------------------

def compare_clusterings(a: ClusterAssignment, b: ClusterAssignment) -> Dict[str, float]:
    """Adjusted Rand index and normalized mutual information over the shared keys."""
    map_a, map_b = a.as_dict(), b.as_dict()
    if len(map_a) != len(a.keys) or len(map_b) != len(b.keys):
        raise KeyMismatch("an assignment lists the same key twice")
    if map_a.keys() != map_b.keys():
        only_a = len(map_a.keys() - map_b.keys())
        only_b = len(map_b.keys() - map_a.keys())
        raise KeyMismatch(f"{a.method} and {b.method} differ in keys ({only_a} only in {a.method}, "
                          f"{only_b} only in {b.method})")
    keys = sorted(map_a)
    la = [map_a[key] for key in keys]
    lb = [map_b[key] for key in keys]
    return {
        "ari": float(adjusted_rand_score(la, lb)),
        "nmi": float(normalized_mutual_info_score(la, lb)),
        "n": float(len(keys)),
    }


def cluster_switch_rate(assignment: ClusterAssignment, player_id: int) -> float:
    """Fraction of consecutive games in which the player's cluster changes."""
    clusters = [cluster for _, cluster in assignment.timeline(player_id)]
    if len(clusters) < 2:
        return 0.0
    return sum(x != y for x, y in zip(clusters, clusters[1:])) / (len(clusters) - 1)


def write_metrics(metrics: Dict[str, float], path: str) -> None:
    frame = pd.DataFrame(sorted(metrics.items()), columns=["metric", "value"])
    with atomic_path(path) as tmp:
        frame.to_csv(tmp, index=False, lineterminator="\n", float_format="%.10g")


def _strip_chart(assignment: ClusterAssignment, players: Sequence[int], title: str) -> Figure:
    height = 0.35 * len(players) + 1.2
    fig = Figure(figsize=(10, height))
    ax = fig.add_subplot(1, 1, 1)
    cmap = matplotlib.colormaps["tab20"]
    for row, player_id in enumerate(players):
        clusters = [cluster for _, cluster in assignment.timeline(player_id)]
        ax.scatter(range(len(clusters)), [row] * len(clusters), c=[cmap(c % 20) for c in clusters],
                   marker="s", s=18, linewidths=0)
    ax.set_yticks(range(len(players)))
    ax.set_yticklabels([str(p) for p in players], fontsize=7)
    ax.set_xlabel("game (chronological)")
    ax.set_ylabel("player")
    ax.set_title(title)
    ax.invert_yaxis()
    fig.subplots_adjust(left=0.1, right=0.98, bottom=min(0.45, 0.55 / height), top=1 - min(0.3, 0.35 / height))
    return fig


def timeline_report(assignment: ClusterAssignment, out_dir: str, players: Optional[Sequence[int]] = None,
                    role: Optional[str] = None) -> List[str]:
    """timeline.csv (player_id, game_pk, cluster) sorted by player then game, and timeline.svg."""
    if len(assignment) == 0:
        raise EmptyInput("no assignments to report")
    known = set(assignment.players())
    players = sorted(known) if players is None else sorted(set(players))
    for player_id in players:
        if player_id not in known:
            raise UnknownPlayer(player_id, role)
    rows = [(p, game, cluster) for p in players for game, cluster in assignment.timeline(p)]
    csv_path = os.path.join(out_dir, "timeline.csv")
    svg_path = os.path.join(out_dir, "timeline.svg")
    frame = pd.DataFrame(rows, columns=["player_id", "game_pk", "cluster"])
    with atomic_path(csv_path) as tmp:
        frame.to_csv(tmp, index=False, lineterminator="\n")
    title = f"{assignment.method} clusters at game start (k={assignment.k})"
    fig = _strip_chart(assignment, players, title)
    with matplotlib.rc_context({"svg.hashsalt": "pitchform", "svg.fonttype": "path"}):
        with atomic_path(svg_path) as tmp:
            fig.savefig(tmp, format="svg", metadata={"Date": None})
    logger.info("timeline for %d players written to %s", len(players), out_dir)
    return [csv_path, svg_path]
