"""Gene-tree sampling on a species tree.

Within each species-tree branch, lineages merge backwards in time at rate 1
per pair: while ``l`` lineages are present we draw an Exp(l*(l-1)/2) waiting
time and, if it fits inside the branch, merge a uniformly chosen pair.
Lineages surviving to the top of a branch enter the parent population; the
region above the root is treated as a branch of infinite length, so
coalescence there continues until a single lineage remains.

Two batched samplers cover the trees the experiment harness uses constantly
(two leaves, and the three-leaf clock tree).  They run the identical
two-level process vectorized over genes and are equivalence-tested against
the general per-gene sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EmbeddingError
from .rng import SeedLike, as_rng
from .trees import GeneNode, GeneTree, SpeciesTree


def sample_gene_tree(species: SpeciesTree, seed: SeedLike) -> GeneTree:
    """Draw one gene genealogy from the multispecies coalescent on `species`.

    Deterministic given (species, seed).  The returned tree carries
    coalescence times and the population each node lives in; mutation
    probabilities are attached separately.
    """
    rng = as_rng(seed)
    nodes: list[GeneNode] = []
    # lineages entering the branch above each species node, filled bottom-up
    entering: dict[int, list[int]] = {}
    for leaf_id in species.leaf_ids:
        leaf = species.nodes[leaf_id]
        gid = len(nodes)
        nodes.append(GeneNode(gid, None, leaf.time, pop=leaf_id, label=leaf.label))
        entering[leaf_id] = [gid]

    order = sorted(range(len(species.nodes)), key=lambda i: (species.nodes[i].time, i))
    for sid in order:
        snode = species.nodes[sid]
        if snode.children:
            lineages = []
            for c in snode.children:
                lineages.extend(entering.pop(c))
        else:
            lineages = entering[sid]
        t = snode.time
        top = species.branch_top(sid)
        while len(lineages) > 1:
            n_pairs = len(lineages) * (len(lineages) - 1) // 2
            t_next = t + rng.exponential(1.0 / n_pairs)
            if t_next >= top:
                break
            t = t_next
            i = int(rng.integers(len(lineages)))
            j = int(rng.integers(len(lineages) - 1))
            if j >= i:
                j += 1
            a, b = sorted((lineages[i], lineages[j]))
            gid = len(nodes)
            nodes.append(GeneNode(gid, None, t, pop=sid))
            nodes[a].parent = gid
            nodes[b].parent = gid
            lineages = [x for x in lineages if x not in (a, b)]
            lineages.append(gid)
        entering[sid] = lineages
    return GeneTree(nodes)


def attach_mutation_probs(gene: GeneTree, species: SpeciesTree) -> GeneTree:
    """Fill per-edge elapsed times and mutation probabilities in place.

    Each gene-tree edge accumulates rate-weighted time piecewise across the
    species-tree branches it traverses; the edge mutation probability is
    ``1 - exp(-sum(nu * dt))``.  Raises EmbeddingError when node times are
    inconsistent with the claimed populations.
    """
    for node in gene.nodes:
        pop = species.nodes[node.pop]
        if node.time < pop.time - 1e-9 or node.time >= species.branch_top(node.pop):
            raise EmbeddingError(
                f"gene node {node.id} at time {node.time} lies outside its population's branch"
            )
        if not node.children:
            if pop.children or pop.label != node.label:
                raise EmbeddingError(f"gene leaf {node.label!r} is not embedded at species leaf")
        if node.parent is None:
            continue
        t_top = gene.nodes[node.parent].time
        if t_top < node.time:
            raise EmbeddingError(f"gene edge above node {node.id} has negative duration")
        weighted = 0.0
        t = node.time
        pop_id = node.pop
        while species.branch_top(pop_id) < t_top:
            seg_top = species.branch_top(pop_id)
            weighted += species.nodes[pop_id].nu * (seg_top - t)
            t = seg_top
            pop_id = species.nodes[pop_id].parent
        weighted += species.nodes[pop_id].nu * (t_top - t)
        node.t_edge = t_top - node.time
        node.p_edge = -math.expm1(-weighted)
    return gene


def pair_coalescence_times(tau: float, m: int, rng: SeedLike, z: np.ndarray | None = None) -> np.ndarray:
    """Coalescence times for m genes on the two-leaf tree with divergence tau.

    The single pair merges at ``tau + Z`` with Z ~ Exp(1); pass `z` to pin
    the exponential layer (conditional sampling).
    """
    if tau <= 0:
        raise DomainError(f"divergence time must be positive, got {tau}")
    if z is None:
        z = as_rng(rng).exponential(size=m)
    z = np.asarray(z, dtype=float)
    if z.shape != (m,) or np.any(z < 0):
        raise DomainError("pinned z values must be m nonnegative offsets")
    return tau + z


@dataclass
class TripletGenealogies:
    """Batched three-leaf genealogies for the clock tree ((a,b):1-f,c):1.

    ``first_pair`` codes which pair coalesces first in the (a,b,c) frame
    (0=ab, 1=ac, 2=bc); ``t_first``/``t_second`` are the two coalescence
    times.  Discordant topologies (first_pair != 0) arise exactly when the
    a-b pair fails to merge inside the internal branch.
    """

    first_pair: np.ndarray
    t_first: np.ndarray
    t_second: np.ndarray


def triplet_genealogies(f: float, m: int, rng: SeedLike) -> TripletGenealogies:
    """Sample m genealogies on the three-leaf clock tree with internal branch f."""
    if not 0 < f < 1:
        raise DomainError(f"internal branch length must lie in (0,1), got {f}")
    rng = as_rng(rng)
    race = rng.exponential(size=m)          # a-b race inside the internal branch
    merged = race <= f
    above_two = rng.exponential(size=m)     # root population, two lineages
    above_three_first = rng.exponential(scale=1.0 / 3.0, size=m)
    above_three_second = rng.exponential(size=m)
    pick = rng.integers(0, 3, size=m)       # uniform pair among ab, ac, bc

    first_pair = np.where(merged, 0, pick)
    t_first = np.where(merged, 1.0 - f + race, 1.0 + above_three_first)
    t_second = np.where(merged, 1.0 + above_two, 1.0 + above_three_first + above_three_second)
    return TripletGenealogies(first_pair, t_first, t_second)
