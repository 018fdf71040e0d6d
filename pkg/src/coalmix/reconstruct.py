"""Topology inference from multilocus distance counts.

Triplet calls compare the three leaf pairs with the model-free two-sample
test; a pair is the inferred closest pair only if it wins both of its
comparisons, otherwise the call is undecided.  Full trees come from
single-linkage clustering of quantile-based distance estimates, which under
a molecular clock recovers the rooted topology and merge heights exactly on
noiseless input.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .detection import GeneSampleSet, TwoSampleVerdict, agnostic_two_sample_test, empirical_quantile
from .errors import DomainError, SaturationError
from .sequences import ThetaMatrix, jc_invert


@dataclass
class TripletCall:
    labels: tuple[str, str, str]
    closest: tuple[str, str] | None
    verdicts: dict[tuple[tuple[str, str], tuple[str, str]], TwoSampleVerdict]

    def to_json(self) -> str:
        return json.dumps(
            {
                "labels": list(self.labels),
                "closest": list(self.closest) if self.closest else None,
                "comparisons": [
                    {
                        "pairs": [list(a), list(b)],
                        "decision": v.decision,
                        "statistic": list(v.statistic),
                    }
                    for (a, b), v in self.verdicts.items()
                ],
            }
        )


def _pair_samples(theta_matrices: list[ThetaMatrix]) -> tuple[list[str], dict[tuple[str, str], GeneSampleSet]]:
    if not theta_matrices:
        raise DomainError("need at least one theta matrix")
    labels = theta_matrices[0].labels
    k = theta_matrices[0].k
    for mat in theta_matrices:
        if mat.labels != labels or mat.k != k:
            raise DomainError("theta matrices must share labels and k")
    samples = {}
    for a, b in combinations(labels, 2):
        values = np.array([mat.pair(a, b) for mat in theta_matrices], dtype=np.int64)
        samples[(a, b)] = GeneSampleSet(k=k, thetas=values)
    return labels, samples


def triplet_topology(
    theta_matrices: list[ThetaMatrix],
    quantile_constant: float = 1.0,
    split_seed: int = 0,
) -> TripletCall:
    """Infer which pair of three leaves is closest.

    Runs the two-sample test on each pair of leaf pairs; the pair declared
    the alternative (shorter distance) in both of its comparisons is the
    closest.  Any inconsistency yields an undecided call.
    """
    labels, samples = _pair_samples(theta_matrices)
    if len(labels) != 3:
        raise DomainError(f"triplet calls need exactly 3 leaves, got {len(labels)}")
    if len(theta_matrices) < 4:
        raise DomainError("need at least 4 genes to split each comparison into halves")
    pairs = list(combinations(labels, 2))
    wins = {pair: 0 for pair in pairs}
    verdicts = {}
    for i, pa in enumerate(pairs):
        for pb in pairs[i + 1:]:
            verdict = agnostic_two_sample_test(
                samples[pa], samples[pb], quantile_constant=quantile_constant, split_seed=split_seed
            )
            verdicts[(pa, pb)] = verdict
            if verdict.alternative == 1:
                wins[pa] += 1
            elif verdict.alternative == 2:
                wins[pb] += 1
    winners = [pair for pair, count in wins.items() if count == 2]
    closest = winners[0] if len(winners) == 1 else None
    return TripletCall(labels=tuple(labels), closest=closest, verdicts=verdicts)


@dataclass
class DistanceEstimates:
    labels: list[str]
    matrix: np.ndarray
    saturated: list[tuple[str, str]] = field(default_factory=list)


def quantile_distance_estimate(
    theta_matrices: list[ThetaMatrix], quantile_constant: float = 1.0
) -> DistanceEstimates:
    """Pairwise distance estimates from the C/sqrt(k) quantile of theta/k.

    The low quantile tracks the shortest coalescence times, so the estimate
    targets the species-tree distance (the support edge of theta/k) rather
    than the mean, which is inflated by the coalescent waiting time.
    Saturated pairs (quantile at or beyond 3/4) are reported and left NaN.
    """
    labels, samples = _pair_samples(theta_matrices)
    k = theta_matrices[0].k
    q = min(1.0, quantile_constant / math.sqrt(k))
    n = len(labels)
    matrix = np.zeros((n, n))
    saturated = []
    for (a, b), sample in samples.items():
        i, j = labels.index(a), labels.index(b)
        frac = empirical_quantile(sample, q) / k
        try:
            matrix[i, j] = matrix[j, i] = jc_invert(frac)
        except SaturationError:
            matrix[i, j] = matrix[j, i] = math.nan
            saturated.append((a, b))
    return DistanceEstimates(labels=labels, matrix=matrix, saturated=saturated)


@dataclass
class ClockNode:
    id: int
    parent: int | None
    height: float
    label: str | None = None
    children: list[int] = field(default_factory=list)


class ClockTree:
    """Rooted ultrametric tree with merge heights (estimated divergence times)."""

    def __init__(self, nodes: list[ClockNode]):
        self.nodes = nodes
        roots = [n.id for n in nodes if n.parent is None]
        if len(roots) != 1:
            raise DomainError("clock tree must have exactly one root")
        self.root = roots[0]
        for n in nodes:
            n.children = []
        for n in nodes:
            if n.parent is not None:
                nodes[n.parent].children.append(n.id)
        self.validate()

    def validate(self) -> None:
        for n in self.nodes:
            if not n.children and abs(n.height) > 1e-12:
                raise DomainError("leaves must sit at height 0")
            if n.parent is not None and self.nodes[n.parent].height <= n.height - 1e-12:
                raise DomainError("parent height must exceed child height")

    @property
    def leaf_labels(self) -> list[str]:
        return sorted(n.label for n in self.nodes if not n.children)

    def to_newick(self, float_fmt: str = "%.12g") -> str:
        def render(i: int) -> str:
            n = self.nodes[i]
            body = "(" + ",".join(render(c) for c in sorted(n.children)) + ")" if n.children else n.label
            if n.parent is not None:
                body += ":" + (float_fmt % (self.nodes[n.parent].height - n.height))
            return body

        return render(self.root) + ";"

    def topology_key(self) -> str:
        def render(i: int) -> str:
            n = self.nodes[i]
            if not n.children:
                return n.label
            return "(" + ",".join(sorted(render(c) for c in n.children)) + ")"

        return render(self.root)

    def distance_matrix(self) -> tuple[list[str], np.ndarray]:
        """Induced leaf distances: twice the height of each pair's meeting node."""
        labels = self.leaf_labels
        index = {n.label: n.id for n in self.nodes if not n.children}
        n = len(labels)
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                a, b = index[labels[i]], index[labels[j]]
                anc = set()
                v = a
                while v is not None:
                    anc.add(v)
                    v = self.nodes[v].parent
                v = b
                while v not in anc:
                    v = self.nodes[v].parent
                out[i, j] = out[j, i] = 2.0 * self.nodes[v].height
        return labels, out


def single_linkage_tree(d_hat: np.ndarray, labels: list[str] | None = None) -> ClockTree:
    """Single-linkage dendrogram of a distance matrix, as a rooted clock tree.

    Clusters merge at height = (minimum cross-pair distance) / 2; on input
    that is exactly ultrametric this reproduces the generating tree.
    """
    d = np.asarray(d_hat, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise DomainError("distance matrix must be square")
    n = d.shape[0]
    if labels is None:
        labels = [str(i + 1) for i in range(n)]
    if len(labels) != n:
        raise DomainError("label count must match matrix size")
    if not np.allclose(d, d.T, atol=1e-12):
        raise DomainError("distance matrix must be symmetric")
    if np.any(np.diagonal(d) != 0):
        raise DomainError("distance matrix must have a zero diagonal")
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise DomainError("distances must be finite and nonnegative")

    nodes = [ClockNode(i, None, 0.0, labels[i]) for i in range(n)]
    active: dict[int, int] = {i: i for i in range(n)}   # cluster id -> node id
    cross = d.copy()
    np.fill_diagonal(cross, np.inf)
    alive = list(range(n))
    while len(alive) > 1:
        best = (np.inf, None)
        for ii, a in enumerate(alive):
            for b in alive[ii + 1:]:
                if cross[a, b] < best[0]:
                    best = (cross[a, b], (a, b))
        dist, (a, b) = best
        node = ClockNode(len(nodes), None, dist / 2.0)
        nodes.append(node)
        nodes[active[a]].parent = node.id
        nodes[active[b]].parent = node.id
        # single-linkage update: the merged cluster keeps the closer distance
        for c in alive:
            if c not in (a, b):
                cross[a, c] = cross[c, a] = min(cross[a, c], cross[b, c])
        active[a] = node.id
        alive.remove(b)
    return ClockTree(nodes)
