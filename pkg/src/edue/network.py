"""Road network, OD structure, and the explicitly enumerated path sets.

Paths are input data, not computed: generating a good path set is a separate
problem and the equilibrium model takes the set as given.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .grid import TimeGrid

__all__ = ["Link", "Path", "Network", "StructureError", "validate", "max_exit_capacity"]


class StructureError(ValueError):
    """The network object is structurally unusable (duplicate ids, empty sets)."""


@dataclass(frozen=True)
class Link:
    """Directed link with free-flow traversal time and a finite exit capacity."""

    id: str
    tail: str
    head: str
    free_flow_time: float  # hours
    exit_capacity: float  # vehicles/hour


@dataclass(frozen=True)
class Path:
    """Ordered sequence of link ids connecting one OD pair."""

    id: str
    link_ids: tuple[str, ...]
    origin: str
    destination: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "link_ids", tuple(self.link_ids))


@dataclass(frozen=True)
class Network:
    """Immutable network: links, paths, OD pairs and the shared desired arrival time."""

    links: tuple[Link, ...]
    paths: tuple[Path, ...]
    arrival_target: float  # desired arrival time, hours
    od_pairs: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        links = tuple(self.links)
        paths = tuple(self.paths)
        if len({l.id for l in links}) != len(links):
            raise StructureError("duplicate link ids")
        if len({p.id for p in paths}) != len(paths):
            raise StructureError("duplicate path ids")
        od_pairs = tuple(self.od_pairs)
        if not od_pairs:
            seen: list[tuple[str, str]] = []
            for p in paths:
                od = (p.origin, p.destination)
                if od not in seen:
                    seen.append(od)
            od_pairs = tuple(seen)
        object.__setattr__(self, "links", links)
        object.__setattr__(self, "paths", paths)
        object.__setattr__(self, "od_pairs", od_pairs)

    @property
    def link_by_id(self) -> dict[str, Link]:
        return {l.id: l for l in self.links}

    def od_index(self, origin: str, destination: str) -> int:
        try:
            return self.od_pairs.index((origin, destination))
        except ValueError:
            raise StructureError(f"unknown OD pair {origin}->{destination}") from None

    @property
    def path_od(self) -> tuple[int, ...]:
        """For each path index, the index of its OD pair."""
        return tuple(self.od_index(p.origin, p.destination) for p in self.paths)

    @property
    def od_paths(self) -> tuple[tuple[int, ...], ...]:
        """Per OD pair, the indices of its paths, sorted by path id.

        The sort fixes the tie-breaking order used by best-response argmins.
        """
        out: list[tuple[int, ...]] = []
        for w, od in enumerate(self.od_pairs):
            idx = [i for i, p in enumerate(self.paths) if (p.origin, p.destination) == od]
            idx.sort(key=lambda i: self.paths[i].id)
            out.append(tuple(idx))
        return tuple(out)

    def path_links(self, path_index: int) -> tuple[Link, ...]:
        by_id = self.link_by_id
        return tuple(by_id[lid] for lid in self.paths[path_index].link_ids)

    def path_free_flow_time(self, path_index: int) -> float:
        return sum(l.free_flow_time for l in self.path_links(path_index))


def validate(network: Network, grid: TimeGrid) -> list[str]:
    """Structural checks. Returns a list of human-readable violations;
    an empty list means the network is usable with the given grid."""
    violations: list[str] = []
    by_id = network.link_by_id
    for link in network.links:
        if link.exit_capacity <= 0.0:
            violations.append(f"link {link.id}: nonpositive capacity")
        if link.free_flow_time <= 0.0:
            violations.append(f"link {link.id}: nonpositive free-flow time")
    for path in network.paths:
        if not path.link_ids:
            violations.append(f"path {path.id}: empty link sequence")
            continue
        missing = [lid for lid in path.link_ids if lid not in by_id]
        if missing:
            violations.append(f"path {path.id}: unknown links {missing}")
            continue
        if len(set(path.link_ids)) != len(path.link_ids):
            violations.append(f"path {path.id}: repeated link")
        links = [by_id[lid] for lid in path.link_ids]
        if links[0].tail != path.origin:
            violations.append(f"path {path.id}: does not start at origin {path.origin}")
        if links[-1].head != path.destination:
            violations.append(
                f"path {path.id}: does not end at destination {path.destination}"
            )
        for a, b in zip(links, links[1:]):
            if a.head != b.tail:
                violations.append(
                    f"path {path.id}: links {a.id} and {b.id} are not adjacent"
                )
    for od in network.od_pairs:
        if not any((p.origin, p.destination) == od for p in network.paths):
            violations.append(f"OD pair {od[0]}->{od[1]}: empty path set")
    if not network.arrival_target < grid.tf:
        violations.append("desired arrival time must precede the horizon end")
    return violations


def max_exit_capacity(network: Network) -> float:
    """Largest link exit capacity in the network."""
    if not network.links:
        raise StructureError("network has no links")
    return max(l.exit_capacity for l in network.links)
