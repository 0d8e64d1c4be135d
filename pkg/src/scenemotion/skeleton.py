"""Skeleton graphs with a fixed coarsening hierarchy.

A skeleton is a tree of joints plus an ordered ladder of coarsened node
counts (default 1 -> 5 -> 11 -> 19).  The ladder drives the graph up- and
downsampling layers of the pose networks, so every joint must map to exactly
one coarse node per level and the partitions must be nested.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

JOINT_NAMES = (
    "pelvis", "spine", "chest", "neck", "head",
    "left_shoulder", "left_elbow", "left_wrist",
    "right_shoulder", "right_elbow", "right_wrist",
    "left_hip", "left_knee", "left_ankle", "left_foot",
    "right_hip", "right_knee", "right_ankle", "right_foot",
)

_DEFAULT_BONES = (
    (0, 1), (1, 2), (2, 3), (3, 4),
    (2, 5), (5, 6), (6, 7),
    (2, 8), (8, 9), (9, 10),
    (0, 11), (11, 12), (12, 13), (13, 14),
    (0, 15), (15, 16), (16, 17), (17, 18),
)

# Coarse memberships for the default 19-joint body: five limbs, then a
# finer 11-node split of the limbs.
_ASSIGN_5 = (0, 0, 0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4)
_ASSIGN_11 = (0, 0, 1, 2, 2, 3, 3, 4, 5, 5, 6, 7, 7, 8, 8, 9, 9, 10, 10)


def _check_tree(joint_count: int, bones) -> None:
    """Union-find check that `bones` form a connected cycle-free tree."""
    parent = list(range(joint_count))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in bones:
        if not (0 <= i < joint_count and 0 <= j < joint_count):
            raise ValidationError(f"bone ({i}, {j}) references a joint outside [0, {joint_count})")
        if i == j:
            raise ValidationError(f"bone ({i}, {j}) is a self loop")
        ri, rj = find(i), find(j)
        if ri == rj:
            raise ValidationError(f"bone ({i}, {j}) closes a cycle")
        parent[ri] = rj

    roots = {find(k) for k in range(joint_count)}
    if len(roots) != 1:
        raise ValidationError(f"bone list leaves {len(roots)} disconnected components")


@dataclass(frozen=True)
class SkeletonGraph:
    """A joint tree plus the coarsening ladder used by graph resampling."""

    joint_count: int
    root_index: int
    bones: tuple[tuple[int, int], ...]
    coarsening_levels: tuple[int, ...] = (1, 5, 11, 19)
    level_assignments: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self):
        if self.joint_count < 1:
            raise ValidationError("joint_count must be positive")
        if not (0 <= self.root_index < self.joint_count):
            raise ValidationError(f"root_index {self.root_index} outside [0, {self.joint_count})")
        _check_tree(self.joint_count, self.bones)
        levels = self.coarsening_levels
        if not levels or any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValidationError("coarsening_levels must be strictly increasing")
        if levels[-1] != self.joint_count:
            raise ValidationError("coarsening_levels must end at joint_count")
        assigns = self.level_assignments
        if len(assigns) != len(levels):
            raise ValidationError("one assignment table per coarsening level is required")
        for k, (count, table) in enumerate(zip(levels, assigns)):
            if len(table) != self.joint_count:
                raise ValidationError(f"level {k} assignment must cover all joints")
            if any(not (0 <= node < count) for node in table):
                raise ValidationError(f"level {k} assignment references a node outside [0, {count})")
            if len(set(table)) != count:
                raise ValidationError(f"level {k} assignment leaves an empty coarse node")
        if assigns[-1] != tuple(range(self.joint_count)):
            raise ValidationError("finest level assignment must be the identity")
        # Nested partitions: joints merged at a fine level stay merged coarser.
        for k in range(len(levels) - 1):
            coarse, fine = assigns[k], assigns[k + 1]
            parent_of: dict[int, int] = {}
            for joint in range(self.joint_count):
                known = parent_of.setdefault(fine[joint], coarse[joint])
                if known != coarse[joint]:
                    raise ValidationError(f"levels {k} and {k + 1} are not nested at joint {joint}")

    @property
    def level_count(self) -> int:
        return len(self.coarsening_levels)

    def to_dict(self) -> dict:
        return {
            "joint_count": self.joint_count,
            "root_index": self.root_index,
            "bones": [list(b) for b in self.bones],
            "coarsening_levels": list(self.coarsening_levels),
            "level_assignments": [list(t) for t in self.level_assignments],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SkeletonGraph":
        return cls(
            joint_count=int(payload["joint_count"]),
            root_index=int(payload["root_index"]),
            bones=tuple(tuple(int(x) for x in b) for b in payload["bones"]),
            coarsening_levels=tuple(int(x) for x in payload["coarsening_levels"]),
            level_assignments=tuple(tuple(int(x) for x in t) for t in payload["level_assignments"]),
        )


def default_skeleton() -> SkeletonGraph:
    """The 19 key-joint body used throughout, with the 1/5/11/19 ladder."""
    j = len(JOINT_NAMES)
    return SkeletonGraph(
        joint_count=j,
        root_index=0,
        bones=_DEFAULT_BONES,
        coarsening_levels=(1, 5, 11, j),
        level_assignments=(
            (0,) * j,
            _ASSIGN_5,
            _ASSIGN_11,
            tuple(range(j)),
        ),
    )


def with_track_node(graph: SkeletonGraph) -> SkeletonGraph:
    """Append a pseudo node carrying the root track, for single-stage synthesis.

    The extra node attaches to the root joint and gets its own coarse node at
    every level, so the graph resampling machinery applies unchanged.
    """
    j = graph.joint_count
    return SkeletonGraph(
        joint_count=j + 1,
        root_index=graph.root_index,
        bones=graph.bones + ((graph.root_index, j),),
        coarsening_levels=tuple(c + 1 for c in graph.coarsening_levels),
        level_assignments=tuple(
            table + (count,) for table, count in zip(graph.level_assignments, graph.coarsening_levels)
        ),
    )


def level_adjacency(graph: SkeletonGraph, level: int) -> np.ndarray:
    """0/1 adjacency of the contracted graph at `level` (no self loops)."""
    table = graph.level_assignments[level]
    n = graph.coarsening_levels[level]
    adj = np.zeros((n, n), dtype=np.float64)
    for i, j in graph.bones:
        a, b = table[i], table[j]
        if a != b:
            adj[a, b] = 1.0
            adj[b, a] = 1.0
    return adj


def normalized_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """Symmetric D^-1/2 (A + I) D^-1/2 normalization."""
    a_hat = adjacency + np.eye(adjacency.shape[0])
    d = a_hat.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return a_hat * inv_sqrt[:, None] * inv_sqrt[None, :]


def _fine_to_coarse(graph: SkeletonGraph, fine_level: int) -> np.ndarray:
    """Map each node of `fine_level` to its parent node one level coarser."""
    coarse = graph.level_assignments[fine_level - 1]
    fine = graph.level_assignments[fine_level]
    parents = np.full(graph.coarsening_levels[fine_level], -1, dtype=np.int64)
    for joint in range(graph.joint_count):
        parents[fine[joint]] = coarse[joint]
    return parents


def expand_matrix(graph: SkeletonGraph, fine_level: int) -> np.ndarray:
    """(V_fine, V_coarse) matrix copying each parent's feature to its children."""
    parents = _fine_to_coarse(graph, fine_level)
    out = np.zeros((parents.size, graph.coarsening_levels[fine_level - 1]))
    out[np.arange(parents.size), parents] = 1.0
    return out


def reduce_matrix(graph: SkeletonGraph, fine_level: int) -> np.ndarray:
    """(V_coarse, V_fine) matrix mean-pooling children into their parent."""
    parents = _fine_to_coarse(graph, fine_level)
    out = np.zeros((graph.coarsening_levels[fine_level - 1], parents.size))
    out[parents, np.arange(parents.size)] = 1.0
    return out / out.sum(axis=1, keepdims=True)
