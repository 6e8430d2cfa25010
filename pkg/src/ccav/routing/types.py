from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from ..net import EffectiveSpeedMap, RoadNetwork


class NoRoute(Exception):
    """No feasible route between the requested endpoints."""


class SourceUncovered(NoRoute):
    pass


class DestinationUncovered(NoRoute):
    pass


@dataclass(frozen=True)
class Traversal:
    """Piece of one segment, offsets measured from the segment's first endpoint."""

    segment: int
    direction: int
    entry: float
    exit: float

    @property
    def distance(self) -> float:
        return abs(self.exit - self.entry)


@dataclass(frozen=True)
class Route:
    source: int
    destination: int
    traversals: tuple[Traversal, ...]
    total_time: float
    scheme: str
    gamma_used: float | None = None
    top_path: tuple[int, ...] | None = None
    switch_index: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_segments(self) -> int:
        return len(self.traversals)

    def traversal_times(self, esm: EffectiveSpeedMap) -> list[float]:
        return [t.distance / esm[t.segment] for t in self.traversals]

    def visited_nodes(self, network: RoadNetwork) -> list[int]:
        """Intersections reached in order (full traversals only)."""
        out = [self.source]
        for t in self.traversals:
            seg = network.segments[t.segment]
            if t.direction > 0 and t.exit >= seg.length:
                out.append(seg.endpoints[1])
            elif t.direction < 0 and t.exit <= 0.0:
                out.append(seg.endpoints[0])
        return out

    def to_dict(self, esm: EffectiveSpeedMap | None = None) -> dict:
        doc = {
            "scheme": self.scheme,
            "source": self.source,
            "destination": self.destination,
            "gamma_used": self.gamma_used,
            "total_time": self.total_time,
            "top_path": list(self.top_path) if self.top_path is not None else None,
            "switch_index": self.switch_index,
            "traversals": [
                {"segment": t.segment, "direction": t.direction, "entry": t.entry, "exit": t.exit}
                for t in self.traversals
            ],
        }
        if esm is not None:
            for row, dt in zip(doc["traversals"], self.traversal_times(esm)):
                row["time"] = dt
        return doc

    def to_csv(self, esm: EffectiveSpeedMap) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "scheme", "segment", "direction", "entry", "exit", "time", "cumulative_time"])
        acc = 0.0
        for k, (t, dt) in enumerate(zip(self.traversals, self.traversal_times(esm))):
            acc += dt
            w.writerow([k, self.scheme, t.segment, t.direction, repr(t.entry), repr(t.exit), repr(dt), repr(acc)])
        return buf.getvalue()


def build_route(network, esm, source, destination, pieces, scheme, **kw) -> Route:
    """Merge ``(segment, entry, exit)`` pieces into traversals and total their time."""
    merged: list[list] = []
    for seg, a, b in pieces:
        if a == b:
            continue
        d = 1 if b > a else -1
        if merged and merged[-1][0] == seg and merged[-1][1] == d and merged[-1][3] == a:
            merged[-1][3] = b
        else:
            merged.append([seg, d, a, b])
    travs = tuple(Traversal(int(s), d, float(a), float(b)) for s, d, a, b in merged)
    total = 0.0
    for t in travs:
        total += t.distance / esm[t.segment]
    return Route(source, destination, travs, total, scheme, **kw)
