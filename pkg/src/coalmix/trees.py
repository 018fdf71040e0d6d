"""Species trees and gene trees.

A species tree is a rooted binary leaf-labelled tree whose nodes carry a
time before present (leaves at 0, parent strictly above child) and whose
branches carry a mutation rate ``nu`` (the rate on the branch *above* the
node; the root's ``nu`` applies to the unbounded region above the root).
All times are in coalescent units.

Serialization uses Newick with branch lengths equal to time differences and
an optional per-branch rate annotation::

    tree    := subtree ";"
    subtree := "(" subtree "," subtree ")" [label] [":" length] [annot]
             | label [":" length] [annot]
    annot   := "[&nu=" float "]"

The annotation names the rate of the branch above the annotated node; an
annotation on the root names the rate above the root.  Rates default to 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DomainError

_TIME_TOL = 1e-9


@dataclass
class SpeciesNode:
    id: int
    parent: int | None
    time: float
    nu: float = 1.0
    label: str | None = None
    children: list[int] = field(default_factory=list)


class SpeciesTree:
    """Rooted binary clock tree with divergence times and branch rates."""

    def __init__(self, nodes: list[SpeciesNode]):
        self.nodes = nodes
        roots = [n.id for n in nodes if n.parent is None]
        if len(roots) != 1:
            raise DomainError(f"tree must have exactly one root, found {len(roots)}")
        self.root = roots[0]
        for n in nodes:
            n.children = []
        for n in nodes:
            if n.parent is not None:
                nodes[n.parent].children.append(n.id)
        for n in nodes:
            n.children.sort()
        self.validate()

    def validate(self) -> None:
        labels = []
        for n in self.nodes:
            if len(n.children) not in (0, 2):
                raise DomainError(f"node {n.id} has {len(n.children)} children; tree must be binary")
            if n.nu <= 0:
                raise DomainError(f"node {n.id} has non-positive rate nu={n.nu}")
            if not n.children:
                if n.label is None:
                    raise DomainError(f"leaf {n.id} has no label")
                if abs(n.time) > _TIME_TOL:
                    raise DomainError(f"leaf {n.label!r} has time {n.time}, leaves must sit at 0")
                labels.append(n.label)
            if n.parent is not None and self.nodes[n.parent].time <= n.time + _TIME_TOL:
                raise DomainError(f"node {n.id}: parent time must strictly exceed child time")
        if len(labels) != len(set(labels)):
            raise DomainError("leaf labels must be unique")
        if not labels:
            raise DomainError("tree must have at least one leaf")

    @property
    def leaf_ids(self) -> list[int]:
        return sorted((n.id for n in self.nodes if not n.children), key=lambda i: self.nodes[i].label)

    @property
    def leaf_labels(self) -> list[str]:
        return [self.nodes[i].label for i in self.leaf_ids]

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_labels)

    def branch_top(self, node_id: int) -> float:
        """Time at which the branch above node_id ends (inf above the root)."""
        p = self.nodes[node_id].parent
        return math.inf if p is None else self.nodes[p].time

    def path_distance(self, label_a: str, label_b: str) -> float:
        """Rate-weighted distance between two leaves along the species tree."""
        ia = {n.label: n.id for n in self.nodes if not n.children}
        a, b = ia[label_a], ia[label_b]
        anc_a = {}
        v = a
        while v is not None:
            anc_a[v] = None
            v = self.nodes[v].parent
        v = b
        while v not in anc_a:
            v = self.nodes[v].parent
        mrca = v
        dist = 0.0
        for leaf in (a, b):
            v = leaf
            while v != mrca:
                n = self.nodes[v]
                dist += n.nu * (self.nodes[n.parent].time - n.time)
                v = n.parent
        return dist

    def to_newick(self, float_fmt: str = "%.12g") -> str:
        annotate = any(n.nu != 1.0 for n in self.nodes)

        def render(i: int) -> str:
            n = self.nodes[i]
            if n.children:
                body = "(" + ",".join(render(c) for c in n.children) + ")"
            else:
                body = n.label
            if n.parent is not None:
                body += ":" + (float_fmt % (self.nodes[n.parent].time - n.time))
            if annotate:
                body += "[&nu=" + (float_fmt % n.nu) + "]"
            return body

        return render(self.root) + ";"


def pair_tree(tau: float, labels: tuple[str, str] = ("1", "2"), nu: float = 1.0) -> SpeciesTree:
    """Two-leaf species tree with divergence at time tau (leaf distance 2*tau*nu)."""
    if tau <= 0:
        raise DomainError(f"divergence time must be positive, got {tau}")
    a, b = labels
    return SpeciesTree(
        [
            SpeciesNode(0, 2, 0.0, nu, a),
            SpeciesNode(1, 2, 0.0, nu, b),
            SpeciesNode(2, None, tau, nu),
        ]
    )


def triplet_tree(f: float, closest: tuple[str, str] = ("1", "2")) -> SpeciesTree:
    """Three-leaf clock tree: the closest pair diverges at 1-f, the root sits at 1."""
    if not 0 < f < 1:
        raise DomainError(f"internal branch length f must lie in (0, 1), got {f}")
    labels = {"1", "2", "3"}
    if set(closest) - labels or len(set(closest)) != 2:
        raise DomainError(f"closest pair must name two of 1,2,3, got {closest}")
    a, b = sorted(closest)
    (c,) = labels - {a, b}
    return SpeciesTree(
        [
            SpeciesNode(0, 3, 0.0, 1.0, a),
            SpeciesNode(1, 3, 0.0, 1.0, b),
            SpeciesNode(2, 4, 0.0, 1.0, c),
            SpeciesNode(3, 4, 1.0 - f, 1.0),
            SpeciesNode(4, None, 1.0),
        ]
    )


def single_leaf_tree(label: str = "1") -> SpeciesTree:
    return SpeciesTree([SpeciesNode(0, None, 0.0, 1.0, label)])


class _NewickParser:
    def __init__(self, text: str):
        self.text = text.strip()
        self.pos = 0

    def error(self, msg: str):
        raise DomainError(f"newick parse error at position {self.pos}: {msg}")

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self, ch: str):
        if self.peek() != ch:
            self.error(f"expected {ch!r}")
        self.pos += 1

    def label(self) -> str:
        start = self.pos
        while self.peek() and self.peek() not in "():,;[":
            self.pos += 1
        if self.pos == start:
            self.error("expected a label")
        return self.text[start:self.pos]

    def number(self) -> float:
        start = self.pos
        while self.peek() and (self.peek().isdigit() or self.peek() in "+-.eE"):
            self.pos += 1
        try:
            return float(self.text[start:self.pos])
        except ValueError:
            self.error("expected a number")

    def annotation(self) -> float | None:
        if self.peek() != "[":
            return None
        key = "[&nu="
        if self.text[self.pos:self.pos + len(key)] != key:
            self.error("only [&nu=...] annotations are supported")
        self.pos += len(key)
        nu = self.number()
        self.take("]")
        return nu

    def subtree(self) -> dict:
        node = {"children": [], "label": None, "length": None, "nu": None}
        if self.peek() == "(":
            self.take("(")
            node["children"].append(self.subtree())
            self.take(",")
            node["children"].append(self.subtree())
            self.take(")")
            if self.peek() and self.peek() not in "():,;[":
                node["label"] = self.label()
        else:
            node["label"] = self.label()
        if self.peek() == ":":
            self.take(":")
            node["length"] = self.number()
        node["nu"] = self.annotation()
        return node

    def parse(self) -> dict:
        root = self.subtree()
        self.take(";")
        if self.pos != len(self.text):
            self.error("trailing characters after ';'")
        return root


def from_newick(text: str) -> SpeciesTree:
    """Parse a clock species tree; rejects non-ultrametric branch lengths."""
    spec = _NewickParser(text).parse()
    if spec["length"] is not None:
        raise DomainError("the root must not carry a branch length")
    nodes: list[SpeciesNode] = []

    def build(item: dict) -> int:
        child_ids = []
        for c in item["children"]:
            cid = build(c)
            child_ids.append((cid, c["length"]))
        if child_ids:
            times = []
            for cid, length in child_ids:
                if length is None:
                    raise DomainError("internal edges must carry branch lengths")
                times.append(nodes[cid].time + length)
            if max(times) - min(times) > 1e-6:
                raise DomainError(
                    f"branch lengths are not ultrametric: sibling depths {min(times)} vs {max(times)}"
                )
            time = sum(times) / len(times)
        else:
            time = 0.0
        nid = len(nodes)
        nodes.append(SpeciesNode(nid, None, time, item["nu"] if item["nu"] is not None else 1.0,
                                 item["label"] if not item["children"] else None))
        for cid, _ in child_ids:
            nodes[cid].parent = nid
        return nid

    build(spec)
    return SpeciesTree(nodes)


@dataclass
class GeneNode:
    id: int
    parent: int | None
    time: float
    pop: int
    label: str | None = None
    t_edge: float | None = None
    p_edge: float | None = None
    children: list[int] = field(default_factory=list)


class GeneTree:
    """Per-gene genealogy embedded in a species tree.

    Each node records its coalescence time and the species-tree branch
    (``pop``) in which it lives at that time.  Edge fields ``t_edge`` and
    ``p_edge`` are filled by :func:`coalmix.coalescent.attach_mutation_probs`.
    """

    def __init__(self, nodes: list[GeneNode]):
        self.nodes = nodes
        roots = [n.id for n in nodes if n.parent is None]
        if len(roots) != 1:
            raise DomainError(f"gene tree must have exactly one root, found {len(roots)}")
        self.root = roots[0]
        for n in nodes:
            n.children = []
        for n in nodes:
            if n.parent is not None:
                nodes[n.parent].children.append(n.id)
        for n in nodes:
            n.children.sort()
            if len(n.children) not in (0, 2):
                raise DomainError(f"gene node {n.id} has {len(n.children)} children")

    @property
    def leaf_ids(self) -> list[int]:
        return sorted((n.id for n in self.nodes if not n.children), key=lambda i: self.nodes[i].label)

    @property
    def leaf_labels(self) -> list[str]:
        return [self.nodes[i].label for i in self.leaf_ids]

    def mrca_time(self, label_a: str, label_b: str) -> float:
        ids = {n.label: n.id for n in self.nodes if not n.children}
        a, b = ids[label_a], ids[label_b]
        anc = {}
        v = a
        while v is not None:
            anc[v] = None
            v = self.nodes[v].parent
        v = b
        while v not in anc:
            v = self.nodes[v].parent
        return self.nodes[v].time

    def has_mutation_probs(self) -> bool:
        return all(n.p_edge is not None for n in self.nodes if n.parent is not None)

    def topology_key(self) -> str:
        """Label-sorted nested-parenthesis signature of the rooted topology."""

        def render(i: int) -> str:
            n = self.nodes[i]
            if not n.children:
                return n.label
            return "(" + ",".join(sorted(render(c) for c in n.children)) + ")"

        return render(self.root)
