"""Rooted binary trees: Newick parsing, node numbering, and top-of-tree boundary sets.

Node numbering runs backwards in time: leaves are 1..n in the order they
appear in the Newick text, internal nodes get n+1..2n-1 by post-order
traversal (children as written, root last).  This guarantees parent id >
child id on every edge, which is what lets the truncated-likelihood code
drop a suffix of node ids wholesale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Tree",
    "NewickError",
    "UnsupportedTreeError",
    "parse_newick",
    "to_newick",
    "boundary_nodes",
]


class NewickError(ValueError):
    """Malformed Newick input. Carries the character offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnsupportedTreeError(ValueError):
    """Structurally valid input that the model cannot use (e.g. n < 2)."""


@dataclass(frozen=True)
class Tree:
    """Rooted strictly-binary tree over nodes 1..2n-1 (root = 2n-1).

    Arrays are indexed by node id; index 0 is unused padding.  ``parent[i]``
    is 0 for the root, ``branch_length[i]`` is the length of the edge from
    node i up to its parent (undefined for the root, stored as 0).
    ``child_pairs[i]`` holds an internal node's two children in the order
    they were written, so serialization round-trips exactly.
    """

    n_leaves: int
    parent: np.ndarray            # (2n,) int, parent[root] == 0
    branch_length: np.ndarray     # (2n,) float
    leaf_names: tuple[str, ...]
    child_pairs: np.ndarray       # (2n, 2) int, rows for leaves unused

    def __post_init__(self):
        self.parent.setflags(write=False)
        self.branch_length.setflags(write=False)
        self.child_pairs.setflags(write=False)
        _validate(self)

    @property
    def n_nodes(self) -> int:
        return 2 * self.n_leaves - 1

    @property
    def root(self) -> int:
        return 2 * self.n_leaves - 1

    def children(self, node: int) -> tuple[int, int]:
        if not self.n_leaves < node <= self.root:
            raise ValueError(f"node {node} is not internal")
        pair = self.child_pairs[node]
        return int(pair[0]), int(pair[1])


def _validate(tree: Tree) -> None:
    n = tree.n_leaves
    if n < 2:
        raise UnsupportedTreeError(f"need at least 2 leaves, got {n}")
    if len(tree.leaf_names) != n:
        raise ValueError("leaf_names length disagrees with n_leaves")
    if tree.parent.shape != (2 * n,) or tree.branch_length.shape != (2 * n,):
        raise ValueError("parent/branch_length arrays must have shape (2n,)")
    if tree.child_pairs.shape != (2 * n, 2):
        raise ValueError("child_pairs must have shape (2n, 2)")
    root = tree.root
    if tree.parent[root] != 0:
        raise ValueError("root must have no parent")
    counts = np.zeros(2 * n, dtype=int)
    for child in range(1, root):
        p = int(tree.parent[child])
        if not (n + 1 <= p <= root):
            raise ValueError(f"node {child} has invalid parent {p}")
        if p <= child:
            raise ValueError(f"edge {child}->{p} violates parent id > child id")
        counts[p] += 1
    internal = counts[n + 1 : root + 1]
    if not np.all(internal == 2):
        bad = n + 1 + int(np.argmax(internal != 2))
        raise ValueError(f"internal node {bad} has {counts[bad]} children, expected 2")
    for node in range(n + 1, root + 1):
        for child in tree.child_pairs[node]:
            if tree.parent[child] != node:
                raise ValueError(f"child_pairs disagrees with parent map at node {node}")
    lengths = tree.branch_length[1:root]
    if not np.all(np.isfinite(lengths)) or np.any(lengths < 0):
        raise ValueError("branch lengths must be finite and >= 0")


# ---------------------------------------------------------------------------
# Newick parsing


class _Parser:
    """Recursive-descent parser for a single rooted binary Newick expression."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message: str) -> NewickError:
        return NewickError(message, self.pos)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def expect(self, char: str) -> None:
        self.skip_ws()
        if self.peek() != char:
            raise self.error(f"expected '{char}'")
        self.pos += 1

    def parse(self):
        self.skip_ws()
        node = self.parse_clade()
        self.skip_ws()
        # A trailing root branch length may be present (as in published tree
        # strings); it hangs off nothing and is discarded.
        if self.peek() == ":":
            self.pos += 1
            self.parse_number()
            self.skip_ws()
        if self.peek() == ";":
            self.pos += 1
            self.skip_ws()
        if self.pos != len(self.text):
            raise self.error("trailing characters after tree")
        return node

    def parse_clade(self):
        """Return a leaf name or a ((left, llen), (right, rlen)) pair."""
        self.skip_ws()
        if self.peek() != "(":
            return self.parse_label()
        self.pos += 1
        children = [self.parse_child()]
        self.skip_ws()
        while self.peek() == ",":
            self.pos += 1
            children.append(self.parse_child())
            self.skip_ws()
        self.expect(")")
        if len(children) != 2:
            raise self.error(f"non-binary node with {len(children)} children")
        return tuple(children)

    def parse_child(self):
        subtree = self.parse_clade()
        self.skip_ws()
        if self.peek() != ":":
            raise self.error("missing branch length")
        self.pos += 1
        return (subtree, self.parse_number())

    def parse_label(self) -> str:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (
            self.text[self.pos].isalnum() or self.text[self.pos] in "_.-|"
        ):
            self.pos += 1
        if self.pos == start:
            raise self.error("expected a taxon label or '('")
        return self.text[start : self.pos]

    def parse_number(self) -> float:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (
            self.text[self.pos].isdigit() or self.text[self.pos] in "+-.eE"
        ):
            self.pos += 1
        try:
            value = float(self.text[start : self.pos])
        except ValueError:
            self.pos = start
            raise self.error("invalid branch length") from None
        if not np.isfinite(value) or value < 0:
            self.pos = start
            raise self.error("branch length must be finite and >= 0")
        return value


def parse_newick(text: str) -> Tree:
    """Parse a rooted binary Newick string into a Tree.

    Leaves are numbered 1..n in order of appearance; internal nodes are
    numbered n+1..2n-1 in post-order with children taken as written, so the
    root always receives id 2n-1.  Every non-root node must carry a branch
    length.  Raises NewickError with a character offset on syntax problems
    and UnsupportedTreeError for trees with fewer than two leaves.
    """
    structure = _Parser(text).parse()
    if isinstance(structure, str):
        raise UnsupportedTreeError("need at least 2 leaves, got 1")

    leaf_names: list[str] = []
    _collect_leaves(structure, leaf_names)
    n = len(leaf_names)

    parent = np.zeros(2 * n, dtype=np.int64)
    lengths = np.zeros(2 * n, dtype=np.float64)
    pairs = np.zeros((2 * n, 2), dtype=np.int64)
    counter = {"leaf": 0, "internal": n}

    def assign(node) -> int:
        if isinstance(node, str):
            counter["leaf"] += 1
            return counter["leaf"]
        (left, llen), (right, rlen) = node
        left_id = assign(left)
        right_id = assign(right)
        counter["internal"] += 1
        me = counter["internal"]
        parent[left_id] = me
        parent[right_id] = me
        lengths[left_id] = llen
        lengths[right_id] = rlen
        pairs[me] = (left_id, right_id)
        return me

    assign(structure)
    return Tree(
        n_leaves=n,
        parent=parent,
        branch_length=lengths,
        leaf_names=tuple(leaf_names),
        child_pairs=pairs,
    )


def _collect_leaves(node, out: list[str]) -> None:
    if isinstance(node, str):
        out.append(node)
    else:
        for subtree, _ in node:
            _collect_leaves(subtree, out)


def to_newick(tree: Tree) -> str:
    """Serialize back to Newick with full-precision branch lengths."""

    def render(node: int) -> str:
        if node <= tree.n_leaves:
            return tree.leaf_names[node - 1]
        left, right = tree.children(node)
        return "({}:{!r},{}:{!r})".format(
            render(left), float(tree.branch_length[left]),
            render(right), float(tree.branch_length[right]),
        )

    return render(tree.root) + ";"


# ---------------------------------------------------------------------------
# Truncation support


def boundary_nodes(tree: Tree, g: int) -> frozenset[int]:
    """Removed nodes that are parents of at least one kept node.

    Truncation level g in 1..n removes the top g-1 node ids
    {2n-g+1 .. 2n-1} and keeps {1 .. 2n-g}.  The returned set contains the
    removed nodes with a kept child; the kept subgraph is a forest whose
    roots all hang off these nodes.  g=1 removes nothing and returns the
    empty set.
    """
    n = tree.n_leaves
    if not 1 <= g <= n:
        raise ValueError(f"g must be in 1..{n}, got {g}")
    cut = 2 * n - g  # highest kept node id
    return frozenset(
        int(tree.parent[child])
        for child in range(1, cut + 1)
        if tree.parent[child] > cut
    )
