"""Vickrey point-queue network loading with exact piecewise-linear curves.

Traffic entering a link first travels the free-flow time, then joins a
vertical queue at the link exit that discharges at the exit capacity. All
cumulative curves are piecewise linear, with breakpoints at departure cell
boundaries and at queue regime changes; exit times come from exact inversion
of those curves rather than time-stepping.

Flow is propagated as constant-rate parcels. Parcels are consumed in windows
of width min_a tau_a: any parcel entering a link during a window can produce
downstream entries no earlier than the window's end, so processing windows in
chronological order sees every link's inflow in arrival order.
"""

from __future__ import annotations

import heapq
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import Profile, TimeGrid
from .network import Link, Network

__all__ = ["HorizonOverflowError", "LinkState", "LoadingResult", "load", "default_horizon"]

# Parcels shorter than this (hours) carry no resolvable volume and are dropped.
_MIN_PARCEL_LEN = 1e-15


class HorizonOverflowError(RuntimeError):
    """The network did not clear within the extended horizon."""

    def __init__(self, residual_volume: float, horizon_end: float):
        self.residual_volume = residual_volume
        self.horizon_end = horizon_end
        super().__init__(
            f"loading exceeded horizon end {horizon_end}: "
            f"{residual_volume} vehicles still in network"
        )


@dataclass
class _Segment:
    """Queue dynamics on [start, end): arrival rate and queue size are constant
    and linear respectively. Exit rate is cap while queued, else min(rate, cap)."""

    start: float
    end: float
    q0: float
    rate: float
    cum_in: float  # cumulative queue arrivals at `start`
    cum_out: float  # cumulative exits at `start`


class LinkState:
    """Point-queue state of one link, built incrementally in arrival order."""

    def __init__(self, link: Link):
        self.link = link
        self.cap = link.exit_capacity
        self.tau = link.free_flow_time
        self.segments: list[_Segment] = []
        self._starts: list[float] = []
        self.frontier: float | None = None  # queue-arrival time finalized so far
        self.queue: float = 0.0
        self.cum_in: float = 0.0
        self.cum_out: float = 0.0

    def _push(self, end: float, rate: float) -> None:
        start = self.frontier
        assert start is not None and end > start
        length = end - start
        queued = self.queue > 0.0
        exit_rate = self.cap if queued else min(rate, self.cap)
        slope = rate - exit_rate
        seg = _Segment(start, end, self.queue, rate, self.cum_in, self.cum_out)
        self.segments.append(seg)
        self._starts.append(start)
        self.queue = max(0.0, self.queue + slope * length)
        if self.queue < 1e-12:  # vehicles; snap denormal residue
            self.queue = 0.0
        self.cum_in += rate * length
        self.cum_out += exit_rate * length
        self.frontier = end

    def extend(self, end: float, rate: float) -> None:
        """Append arrivals at constant `rate` on [frontier, end), splitting at
        the instant the queue empties so every segment has one regime."""
        assert self.frontier is not None
        while self.frontier < end - _MIN_PARCEL_LEN:
            if self.queue > 0.0 and rate < self.cap:
                t_empty = self.frontier + self.queue / (self.cap - rate)
                if self.frontier + _MIN_PARCEL_LEN < t_empty < end - _MIN_PARCEL_LEN:
                    self._push(t_empty, rate)
                    self.queue = 0.0
                    continue
            self._push(end, rate)

    def feed(self, pieces: list[tuple[float, float, float]]) -> None:
        """Add merged queue arrivals: contiguous (start, end, total_rate) pieces
        in increasing time. Gaps before/between pieces drain at zero inflow."""
        for s, e, r in pieces:
            if self.frontier is None:
                self.frontier = s
            elif s > self.frontier + _MIN_PARCEL_LEN:
                self.extend(s, 0.0)
            if e > self.frontier:
                self.extend(e, r)

    def finalize(self) -> None:
        """Drain any remaining queue so the curves cover the full busy period."""
        if self.frontier is not None and self.queue > 0.0:
            self.extend(self.frontier + self.queue / self.cap, 0.0)
        self.queue = 0.0

    def queue_at(self, s: float) -> float:
        """Queue size at queue-arrival time s (zero outside the loaded span;
        at the frontier itself, the running queue)."""
        if not self.segments:
            return 0.0
        if s <= self.segments[0].start:
            return 0.0
        if s >= self.frontier:
            return self.queue
        i = bisect_right(self._starts, s) - 1
        seg = self.segments[i]
        queued = seg.q0 > 0.0
        exit_rate = self.cap if queued else min(seg.rate, self.cap)
        return max(0.0, seg.q0 + (seg.rate - exit_rate) * (s - seg.start))

    def exit_time(self, s: float) -> float:
        """Exit time of flow arriving at the queue at time s."""
        return s + self.queue_at(s) / self.cap

    def map_interval(self, s1: float, s2: float, rate: float):
        """FIFO image of a constant-rate arrival slab [s1, s2): yields
        (e_start, e_end, exit_rate) pieces on the exit-time axis."""
        out: list[tuple[float, float, float]] = []
        # walk the segment list, cutting [s1, s2) at segment boundaries
        cuts = [s1]
        i = bisect_right(self._starts, s1) - 1
        i = max(i, 0)
        while i < len(self.segments) and self.segments[i].end < s2:
            if self.segments[i].end > s1:
                cuts.append(self.segments[i].end)
            i += 1
        cuts.append(s2)
        for a, b in zip(cuts, cuts[1:]):
            if b - a <= _MIN_PARCEL_LEN:
                continue
            ea, eb = self.exit_time(a), self.exit_time(b)
            vol = rate * (b - a)
            if eb - ea <= _MIN_PARCEL_LEN:
                # degenerate image; attach the volume as a short burst at cap,
                # never shorter than one float spacing
                eb = max(ea + vol / self.cap, float(np.nextafter(ea, np.inf)))
            out.append((ea, eb, vol / (eb - ea)))
        return out

    def curve_samples(self) -> np.ndarray:
        """Breakpoint samples (time, cum_in, cum_out, queue) of the curves."""
        rows = []
        for seg in self.segments:
            rows.append((seg.start, seg.cum_in, seg.cum_out, seg.q0))
        if self.segments:
            rows.append((self.frontier, self.cum_in, self.cum_out, self.queue))
        return np.array(rows) if rows else np.empty((0, 4))


@dataclass(order=True)
class _Parcel:
    t_start: float
    seq: int
    t_end: float = field(compare=False)
    rate: float = field(compare=False)
    path: int = field(compare=False)
    leg: int = field(compare=False)


def default_horizon(network: Network, flows: Sequence[Profile]) -> float:
    """Extended-horizon length guaranteeing clearance of the loaded volume:
    total departures over the slowest capacity plus the total free-flow time."""
    total = sum(float(f.values.sum()) * f.grid.dt for f in flows)
    min_cap = min(l.exit_capacity for l in network.links)
    total_fft = sum(l.free_flow_time for l in network.links)
    return total / min_cap + total_fft


class LoadingResult:
    """Outcome of one network loading: per-link curves plus exact path
    exit-time evaluation."""

    def __init__(
        self,
        network: Network,
        grid: TimeGrid,
        states: dict[str, LinkState],
        total_in: float,
        total_out: float,
        arrivals_by_path: np.ndarray,
    ):
        self.network = network
        self.grid = grid
        self.states = states
        self.total_in = total_in
        self.total_out = total_out
        self.arrivals_by_path = arrivals_by_path

    @property
    def conservation_residual(self) -> float:
        scale = max(abs(self.total_in), 1.0)
        return abs(self.total_in - self.total_out) / scale

    def exit_time(self, path_index: int, t: float) -> float:
        """Clock time at which a marginal traveler departing at t on the path
        reaches the destination."""
        s = t
        for link in self.network.path_links(path_index):
            state = self.states[link.id]
            s = state.exit_time(s + state.tau)
        return s

    def delay(self, path_index: int, t: float) -> float:
        return self.exit_time(path_index, t) - t

    def delay_profiles(self) -> tuple[Profile, ...]:
        """Cell-averaged path delays: average of the two cell-endpoint values
        of the exact piecewise-linear delay function."""
        bounds = self.grid.boundaries
        out = []
        for p in range(len(self.network.paths)):
            d = np.array([self.delay(p, t) for t in bounds])
            out.append(Profile(self.grid, 0.5 * (d[:-1] + d[1:])))
        return tuple(out)


def load(
    network: Network,
    flows: Sequence[Profile],
    grid: TimeGrid,
    horizon: float | None = None,
) -> LoadingResult:
    """Run the point-queue loading of the given path departure rates.

    Raises HorizonOverflowError if vehicles remain in the network past
    tf + horizon (horizon defaults to a clearance-guaranteeing bound).
    """
    if len(flows) != len(network.paths):
        raise ValueError("need exactly one flow profile per path")
    for f in flows:
        f.require_nonnegative()
    if horizon is None:
        horizon = default_horizon(network, flows)
    t_end = grid.tf + horizon

    states = {l.id: LinkState(l) for l in network.links}
    min_tau = min(l.free_flow_time for l in network.links)
    path_links = [network.path_links(p) for p in range(len(network.paths))]

    heap: list[_Parcel] = []
    seq = 0
    total_in = 0.0
    bounds = grid.boundaries
    for p, f in enumerate(flows):
        for j, rate in enumerate(f.values):
            if rate > 0.0:
                heapq.heappush(
                    heap, _Parcel(float(bounds[j]), seq, float(bounds[j + 1]), float(rate), p, 0)
                )
                seq += 1
                total_in += rate * grid.dt

    total_out = 0.0
    arrivals = np.zeros(len(network.paths))

    while heap:
        window_start = heap[0].t_start
        if window_start > t_end:
            residual = total_in - total_out
            raise HorizonOverflowError(residual, t_end)
        window_end = window_start + min_tau

        # collect the pieces of every parcel that fall inside the window
        batch: list[_Parcel] = []
        while heap and heap[0].t_start < window_end:
            parcel = heapq.heappop(heap)
            if parcel.t_end > window_end + _MIN_PARCEL_LEN:
                heapq.heappush(
                    heap,
                    _Parcel(window_end, seq, parcel.t_end, parcel.rate, parcel.path, parcel.leg),
                )
                seq += 1
                parcel = _Parcel(
                    parcel.t_start, parcel.seq, window_end, parcel.rate, parcel.path, parcel.leg
                )
            if parcel.t_end - parcel.t_start > _MIN_PARCEL_LEN:
                batch.append(parcel)

        # merge this window's arrivals per link and advance the queues
        by_link: dict[str, list[_Parcel]] = {}
        for parcel in batch:
            link = path_links[parcel.path][parcel.leg]
            by_link.setdefault(link.id, []).append(parcel)
        for link_id, parcels in by_link.items():
            state = states[link_id]
            cuts = sorted({p.t_start for p in parcels} | {p.t_end for p in parcels})
            pieces = []
            for a, b in zip(cuts, cuts[1:]):
                r = sum(p.rate for p in parcels if p.t_start <= a and p.t_end >= b)
                pieces.append((a + state.tau, b + state.tau, r))
            state.feed(pieces)

        # map each parcel through its link's exit-time curve
        for parcel in batch:
            link = path_links[parcel.path][parcel.leg]
            state = states[link.id]
            images = state.map_interval(
                parcel.t_start + state.tau, parcel.t_end + state.tau, parcel.rate
            )
            last_leg = parcel.leg == len(path_links[parcel.path]) - 1
            for ea, eb, rate in images:
                if last_leg:
                    if eb > t_end:
                        residual = total_in - total_out
                        raise HorizonOverflowError(residual, t_end)
                    vol = rate * (eb - ea)
                    total_out += vol
                    arrivals[parcel.path] += vol
                else:
                    heapq.heappush(
                        heap, _Parcel(ea, seq, eb, rate, parcel.path, parcel.leg + 1)
                    )
                    seq += 1

    for state in states.values():
        state.finalize()

    return LoadingResult(network, grid, states, total_in, total_out, arrivals)
