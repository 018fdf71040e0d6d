"""Sequence simulation on gene trees and the pairwise distance statistic.

Sites evolve independently: the root sequence is uniform over the four
states 0..3 (A,C,G,T); along an edge with mutation probability p each site
mutates with probability p and, when it does, resamples uniformly over all
four states -- including the current one, so the probability that the two
endpoints of an edge differ at a site is (3/4)p, not p.

The distance statistic ``theta`` counts differing sites between two leaf
sequences; for a leaf pair at rate-weighted path distance d its expectation
is k * (3/4)(1 - exp(-d)).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .coalescent import attach_mutation_probs, pair_coalescence_times, sample_gene_tree, triplet_genealogies
from .errors import DomainError, SaturationError
from .rng import SeedLike, as_rng, derive_rng
from .trees import GeneTree, SpeciesTree

ALPHABET = "ACGT"


@dataclass
class SequenceSet:
    """Aligned leaf sequences for one gene, 2-bit encoded (0..3)."""

    gene_index: int
    k: int
    seqs: dict[str, np.ndarray]

    def validate(self) -> None:
        for label, s in self.seqs.items():
            if s.shape != (self.k,):
                raise DomainError(f"sequence {label!r} has length {s.shape}, expected {self.k}")
            if s.size and (s.min() < 0 or s.max() > 3):
                raise DomainError(f"sequence {label!r} contains symbols outside 0..3")

    def text(self, label: str) -> str:
        return "".join(ALPHABET[v] for v in self.seqs[label])


@dataclass
class ThetaMatrix:
    """Symmetric matrix of differing-site counts for one gene."""

    labels: list[str]
    counts: np.ndarray
    k: int

    def validate(self) -> None:
        n = len(self.labels)
        if self.counts.shape != (n, n):
            raise DomainError("theta matrix shape does not match label count")
        if not np.array_equal(self.counts, self.counts.T):
            raise DomainError("theta matrix must be symmetric")
        if np.any(np.diagonal(self.counts) != 0):
            raise DomainError("theta matrix diagonal must be zero")
        if self.counts.min() < 0 or self.counts.max() > self.k:
            raise DomainError("theta entries must lie in 0..k")

    def pair(self, a: str, b: str) -> int:
        try:
            return int(self.counts[self.labels.index(a), self.labels.index(b)])
        except ValueError:
            raise DomainError(f"leaf pair ({a!r}, {b!r}) not in labels {self.labels}") from None


def simulate_sequences(gene: GeneTree, k: int, seed: SeedLike) -> SequenceSet:
    """Run the substitution process down a gene tree with attached p_e."""
    if k < 0:
        raise DomainError(f"site count must be nonnegative, got {k}")
    if not gene.has_mutation_probs():
        raise DomainError("gene tree lacks mutation probabilities; attach them first")
    rng = as_rng(seed)
    states: dict[int, np.ndarray] = {}
    states[gene.root] = rng.integers(0, 4, size=k, dtype=np.int8)
    # fixed traversal order (preorder by id) for reproducibility
    stack = [gene.root]
    while stack:
        nid = stack.pop()
        node = gene.nodes[nid]
        for child in sorted(node.children, reverse=True):
            cnode = gene.nodes[child]
            states[child] = _mutate(states[nid], float(cnode.p_edge), rng)
            stack.append(child)
    seqs = {gene.nodes[i].label: states[i] for i in gene.leaf_ids}
    return SequenceSet(gene_index=0, k=k, seqs=seqs)


def _mutate(parent: np.ndarray, p_edge: float, rng: np.random.Generator) -> np.ndarray:
    child = parent.copy()
    if parent.size == 0 or p_edge == 0.0:
        return child
    mask = rng.random(parent.shape) < p_edge
    n = int(mask.sum())
    if n:
        child[mask] = rng.integers(0, 4, size=n, dtype=np.int8)
    return child


def theta(a: np.ndarray | str, b: np.ndarray | str) -> int:
    """Number of differing sites between two equal-length sequences."""
    if isinstance(a, str):
        a = encode(a)
    if isinstance(b, str):
        b = encode(b)
    if a.shape != b.shape:
        raise DomainError(f"sequence lengths differ: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


def encode(text: str) -> np.ndarray:
    try:
        return np.array([ALPHABET.index(ch) for ch in text], dtype=np.int8)
    except ValueError:
        raise DomainError(f"sequence contains symbols outside {ALPHABET}") from None


def theta_matrix(seqset: SequenceSet) -> ThetaMatrix:
    labels = sorted(seqset.seqs)
    n = len(labels)
    counts = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            counts[i, j] = counts[j, i] = theta(seqset.seqs[labels[i]], seqset.seqs[labels[j]])
    return ThetaMatrix(labels=labels, counts=counts, k=seqset.k)


def jc_expected_theta(d: float) -> float:
    """Expected differing-site fraction at rate-weighted path distance d."""
    if d < 0:
        raise DomainError(f"path distance must be nonnegative, got {d}")
    return 0.75 * -math.expm1(-d)


def jc_invert(theta_hat: float) -> float:
    """Distance whose expected fraction equals theta_hat; errors at >= 3/4."""
    if theta_hat < 0:
        raise DomainError(f"fraction must be nonnegative, got {theta_hat}")
    if theta_hat >= 0.75:
        raise SaturationError(f"fraction {theta_hat} is at or beyond the 3/4 saturation point")
    return -math.log1p(-theta_hat / 0.75)


def simulate_gene_dataset(species: SpeciesTree, genes: int, k: int, master_seed: int) -> list[ThetaMatrix]:
    """Per-gene theta matrices for `genes` independent genes (reference path).

    Gene j uses the stream (master_seed, j, 0) for its genealogy and
    (master_seed, j, 1) for its sites, so datasets are reproducible and
    independent of evaluation order.
    """
    out = []
    for g in range(genes):
        tree = sample_gene_tree(species, derive_rng(master_seed, g, 0))
        attach_mutation_probs(tree, species)
        seqset = simulate_sequences(tree, k, derive_rng(master_seed, g, 1))
        seqset.gene_index = g
        mat = theta_matrix(seqset)
        out.append(mat)
    return out


def pair_theta_samples(
    tau: float, m: int, k: int, rng: SeedLike, z: np.ndarray | None = None
) -> np.ndarray:
    """Batched theta samples for m genes on the two-leaf tree (rates 1).

    Runs the same two-level model as the per-gene path -- one coalescence
    draw per gene, then explicit root/edge site simulation -- vectorized
    across genes.  Pass `z` to pin the coalescent layer.
    """
    rng = as_rng(rng)
    times = pair_coalescence_times(tau, m, rng, z=z)
    p_e = -np.expm1(-times)
    root = rng.integers(0, 4, size=(m, k), dtype=np.int8)
    leaves = []
    for _ in range(2):
        mask = rng.random((m, k)) < p_e[:, None]
        s = root.copy()
        n = int(mask.sum())
        if n:
            s[mask] = rng.integers(0, 4, size=n, dtype=np.int8)
        leaves.append(s)
    return (leaves[0] != leaves[1]).sum(axis=1)


def triplet_theta_samples(
    f: float,
    m: int,
    k: int,
    rng: SeedLike,
    closest: tuple[str, str] = ("1", "2"),
) -> list[ThetaMatrix]:
    """Batched per-gene theta matrices on the three-leaf clock tree.

    Same generative process as simulate_gene_dataset on triplet_tree(f,
    closest), vectorized by grouping genes on which pair coalesces first.
    """
    rng = as_rng(rng)
    gen = triplet_genealogies(f, m, rng)
    a, b = sorted(closest)
    (c,) = {"1", "2", "3"} - {a, b}
    frame = [a, b, c]

    root = rng.integers(0, 4, size=(m, k), dtype=np.int8)
    anc = _mutate_rows(root, gen.t_second - gen.t_first, rng)
    first_a = _mutate_rows(anc, gen.t_first, rng)
    first_b = _mutate_rows(anc, gen.t_first, rng)
    outlier = _mutate_rows(root, gen.t_second, rng)

    # members of each possible first pair, as indices into the (a,b,c) frame
    pair_members = {0: (0, 1, 2), 1: (0, 2, 1), 2: (1, 2, 0)}
    seqs = np.empty((3, m, k), dtype=np.int8)
    for code, (x, y, z_) in pair_members.items():
        rows = gen.first_pair == code
        seqs[x][rows] = first_a[rows]
        seqs[y][rows] = first_b[rows]
        seqs[z_][rows] = outlier[rows]

    labels = sorted(frame)
    pos = {frame[i]: i for i in range(3)}
    counts = np.zeros((m, 3, 3), dtype=np.int64)
    for i in range(3):
        for j in range(i + 1, 3):
            d = (seqs[pos[labels[i]]] != seqs[pos[labels[j]]]).sum(axis=1)
            counts[:, i, j] = d
            counts[:, j, i] = d
    return [ThetaMatrix(labels=labels, counts=counts[g], k=k) for g in range(m)]


def _mutate_rows(parent: np.ndarray, times: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    p_e = -np.expm1(-times)
    mask = rng.random(parent.shape) < p_e[:, None]
    child = parent.copy()
    n = int(mask.sum())
    if n:
        child[mask] = rng.integers(0, 4, size=n, dtype=np.int8)
    return child


def write_fasta(seqsets: list[SequenceSet], path: str) -> None:
    """One record per (gene, leaf): >gene<j>|leaf<label>."""
    with open(path, "w", encoding="utf-8") as fh:
        for ss in seqsets:
            for label in sorted(ss.seqs):
                fh.write(f">gene{ss.gene_index}|leaf{label}\n")
                fh.write(ss.text(label) + "\n")


def read_fasta(path: str) -> list[SequenceSet]:
    genes: dict[int, dict[str, np.ndarray]] = {}
    with open(path, encoding="utf-8") as fh:
        header = None
        chunks: list[str] = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith(">"):
                if header is not None:
                    _store_fasta_record(genes, header, "".join(chunks))
                header = line[1:]
                chunks = []
            else:
                chunks.append(line)
        if header is not None:
            _store_fasta_record(genes, header, "".join(chunks))
    out = []
    for g in sorted(genes):
        seqs = genes[g]
        ks = {s.size for s in seqs.values()}
        if len(ks) != 1:
            raise DomainError(f"gene {g}: sequences have unequal lengths")
        out.append(SequenceSet(gene_index=g, k=ks.pop(), seqs=seqs))
    return out


def _store_fasta_record(genes: dict, header: str, text: str) -> None:
    try:
        gene_part, leaf_part = header.split("|", 1)
        g = int(gene_part.removeprefix("gene"))
        label = leaf_part.removeprefix("leaf")
    except (ValueError, IndexError):
        raise DomainError(f"malformed FASTA header {header!r}") from None
    genes.setdefault(g, {})[label] = encode(text)


def write_theta_matrices(mats: list[ThetaMatrix], path: str, metadata: dict | None = None) -> None:
    """Stacked square blocks: columns (gene, leaf, <label>, ...)."""
    if not mats:
        raise DomainError("no matrices to write")
    labels = mats[0].labels
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in (metadata or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write(f"# k={mats[0].k}\n")
        writer = csv.writer(fh)
        writer.writerow(["gene", "leaf", *labels])
        for g, mat in enumerate(mats):
            if mat.labels != labels:
                raise DomainError("all matrices must share the same leaf labels")
            for i, label in enumerate(labels):
                writer.writerow([g, label, *mat.counts[i].tolist()])


def read_theta_matrices(path: str) -> list[ThetaMatrix]:
    k = None
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line[1:].strip().startswith("k="):
                    k = int(line.split("=", 1)[1])
                continue
            rows.append(next(csv.reader([line])))
    if k is None:
        raise DomainError("theta CSV lacks the '# k=' metadata line")
    header = rows[0]
    labels = header[2:]
    mats: dict[int, np.ndarray] = {}
    for row in rows[1:]:
        g = int(row[0])
        label = row[1]
        mats.setdefault(g, np.zeros((len(labels), len(labels)), dtype=np.int64))
        mats[g][labels.index(label)] = [int(v) for v in row[2:]]
    return [ThetaMatrix(labels=labels, counts=mats[g], k=k) for g in sorted(mats)]
