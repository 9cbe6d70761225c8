"""Layered venue-category tree: parsing, validation, and queries.

The tree is rooted at a distinguished ``ROOT`` node on layer 0 and is
strictly layered: every child sits exactly one layer below its parent.
Label-bearing nodes (leaves) are indexed contiguously in lexicographic
order of their ids, which fixes the class indexing used everywhere else.

File format (UTF-8, line oriented, ``#`` starts a comment line)::

    child<TAB>parent<TAB>layer

where ``layer`` is the child's layer and the parent of a top-layer node
is the literal ``ROOT``.
"""

from dataclasses import dataclass, field

ROOT_ID = "ROOT"


class HierarchyError(ValueError):
    """Raised for structurally invalid hierarchies or malformed files."""


@dataclass(frozen=True)
class VenueHierarchy:
    """Validated rooted layered tree. Immutable after construction."""

    parent: dict[str, str]           # node -> parent id; absent for the root
    children: dict[str, tuple[str, ...]]  # node -> children sorted by id
    layer: dict[str, int]            # node -> depth from the root
    leaves: tuple[str, ...]          # childless nodes, sorted; index = position
    root: str = ROOT_ID
    _leaf_index: dict[str, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_leaf_index", {n: i for i, n in enumerate(self.leaves)}
        )

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(sorted(self.layer))

    @property
    def num_leaves(self) -> int:
        return len(self.leaves)

    @property
    def max_layer(self) -> int:
        return max(self.layer.values())

    def is_leaf(self, node: str) -> bool:
        return node in self._leaf_index

    def leaf_index(self, node: str) -> int:
        try:
            return self._leaf_index[node]
        except KeyError:
            raise HierarchyError(f"{node!r} is not a leaf") from None

    def __contains__(self, node: str) -> bool:
        return node in self.layer


def _build(parent: dict[str, str], layer: dict[str, int]) -> VenueHierarchy:
    """Validate a parent/layer description and assemble the tree."""
    if not parent:
        raise HierarchyError("empty hierarchy: no edges defined")

    layer = dict(layer)
    layer[ROOT_ID] = 0
    children: dict[str, list[str]] = {n: [] for n in layer}
    for child, par in parent.items():
        if par not in layer:
            raise HierarchyError(f"dangling parent reference: {child!r} -> {par!r}")
        children[par].append(child)

    for child, par in parent.items():
        if layer[child] != layer[par] + 1:
            raise HierarchyError(
                f"layer skip at {child!r}: layer {layer[child]} under "
                f"{par!r} at layer {layer[par]}"
            )

    # A strictly layered parent map cannot loop, but unreachable components
    # (e.g. A->B plus B->A submitted with bogus layers) must still be caught.
    seen = {ROOT_ID}
    stack = [ROOT_ID]
    while stack:
        for c in children[stack.pop()]:
            if c not in seen:
                seen.add(c)
                stack.append(c)
    unreachable = set(layer) - seen
    if unreachable:
        raise HierarchyError(
            f"cycle detected: nodes unreachable from root: {sorted(unreachable)}"
        )

    leaves = tuple(sorted(n for n in layer if not children[n] and n != ROOT_ID))
    if not leaves:
        raise HierarchyError("hierarchy has no leaves")
    if not children[ROOT_ID]:
        raise HierarchyError("root has no children")

    return VenueHierarchy(
        parent=dict(parent),
        children={n: tuple(sorted(c)) for n, c in children.items()},
        layer=layer,
        leaves=leaves,
    )


def parse_hierarchy(text: str) -> VenueHierarchy:
    """Parse the tab-separated edge list into a validated tree.

    Raises HierarchyError on cycles, an attempt to re-root the tree,
    layer skips, dangling parents, or conflicting duplicate definitions.
    """
    parent: dict[str, str] = {}
    layer: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise HierarchyError(
                f"line {lineno}: expected 'child<TAB>parent<TAB>layer', got {raw!r}"
            )
        child, par, layer_str = (p.strip() for p in parts)
        if not child or not par:
            raise HierarchyError(f"line {lineno}: empty node id")
        if child == ROOT_ID:
            raise HierarchyError(
                f"line {lineno}: {ROOT_ID} cannot have a parent (multiple roots?)"
            )
        try:
            lyr = int(layer_str)
        except ValueError:
            raise HierarchyError(f"line {lineno}: bad layer {layer_str!r}") from None
        if lyr < 1:
            raise HierarchyError(f"line {lineno}: layer must be >= 1, got {lyr}")
        if child in parent:
            if parent[child] != par or layer[child] != lyr:
                raise HierarchyError(f"line {lineno}: conflicting redefinition of {child!r}")
            continue
        parent[child] = par
        layer[child] = lyr
    return _build(parent, layer)


def serialize_hierarchy(h: VenueHierarchy) -> str:
    """Canonical text form; parse(serialize(h)) reproduces h exactly."""
    lines = [f"{n}\t{h.parent[n]}\t{h.layer[n]}" for n in sorted(h.parent, key=lambda n: (h.layer[n], n))]
    return "\n".join(lines) + "\n"


def load_hierarchy(path) -> VenueHierarchy:
    with open(path, encoding="utf-8") as fh:
        return parse_hierarchy(fh.read())


def save_hierarchy(path, h: VenueHierarchy) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_hierarchy(h))


def normalize_leaves(
    h: VenueHierarchy, labeled: set[str]
) -> tuple[VenueHierarchy, dict[str, str]]:
    """Push labels on internal nodes down to freshly spawned leaves.

    For every labeled node that still has children, a new child leaf
    ``<id>#leaf`` is created one layer below; samples carrying the old
    node id must be reassigned via the returned rename map. Labeled
    nodes that already are leaves pass through untouched.
    """
    missing = labeled - set(h.layer)
    if missing:
        raise HierarchyError(f"labeled nodes outside hierarchy: {sorted(missing)}")

    renames: dict[str, str] = {}
    parent = dict(h.parent)
    layer = dict(h.layer)
    for node in sorted(labeled):
        if h.is_leaf(node):
            continue
        spawned = f"{node}#leaf"
        if spawned in layer:
            raise HierarchyError(f"spawned leaf id collides with existing node: {spawned!r}")
        parent[spawned] = node
        layer[spawned] = h.layer[node] + 1
        renames[node] = spawned
    if not renames:
        return h, {}
    return _build(parent, layer), renames


def internal_nodes(h: VenueHierarchy) -> list[str]:
    """All nodes with children, deepest layer first, ids sorted within a layer."""
    return sorted(
        (n for n in h.layer if h.children.get(n)),
        key=lambda n: (-h.layer[n], n),
    )


def truncate_ancestry(h: VenueHierarchy, depth: int) -> VenueHierarchy:
    """Limit every leaf's prior chain to its ``depth`` nearest ancestors.

    Ancestors beyond the limit collapse into the root, and layers are
    relabelled as depth from the new root. ``depth >= max chain length``
    returns the hierarchy unchanged; ``depth == 0`` is rejected because a
    tree without internal structure carries no prior (callers switch to
    flat training instead).
    """
    if depth < 1:
        raise HierarchyError("truncation depth must be >= 1; use flat training for 0")
    if depth >= h.max_layer:
        return h

    # First collect every retained true edge, then anchor chain tops that
    # received no parent. Doing it in two passes keeps the result
    # independent of leaf processing order when chains share ancestors.
    retained: dict[str, str] = {}
    tops: set[str] = set()
    for leaf in h.leaves:
        chain = [leaf]
        node = leaf
        while h.parent.get(node, h.root) != h.root and len(chain) < depth + 1:
            node = h.parent[node]
            chain.append(node)
        for lower, upper in zip(chain, chain[1:]):
            retained[lower] = upper
        tops.add(chain[-1])
    parent = retained
    for top in sorted(tops):
        if top not in parent:
            parent[top] = h.root

    # relabel layers as depth from the root
    layer: dict[str, int] = {}

    def depth_of(n: str) -> int:
        if n == h.root:
            return 0
        if n not in layer:
            layer[n] = depth_of(parent[n]) + 1
        return layer[n]

    for n in parent:
        depth_of(n)
    return _build(parent, layer)
