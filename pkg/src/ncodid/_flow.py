"""Integer min-cost flow by successive shortest paths (Dijkstra with potentials).

Pure Python with exact integer costs. Used as the reference solver for the
fine-balance matching network; the production path in :mod:`ncodid.matcher`
solves the same network as a sparse assignment problem.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field


class InfeasibleFlow(RuntimeError):
    def __init__(self, shipped: int, demand: int):
        super().__init__(f"only {shipped} of {demand} units of flow can be routed")
        self.shipped = shipped
        self.demand = demand


@dataclass
class FlowNetwork:
    """Directed network with integral capacities and nonnegative integer costs.

    Arcs are stored as parallel lists; arc ``2k`` is the ``k``-th added arc
    and ``2k + 1`` its residual twin.
    """

    n_nodes: int
    head: list[int] = field(default_factory=list)
    cap: list[int] = field(default_factory=list)
    cost: list[int] = field(default_factory=list)
    adjacency: list[list[int]] = field(init=False)

    def __post_init__(self):
        self.adjacency = [[] for _ in range(self.n_nodes)]

    def add_arc(self, u: int, v: int, capacity: int, cost: int) -> int:
        if capacity < 0 or cost < 0:
            raise ValueError("capacities and costs must be nonnegative")
        k = len(self.head)
        self.head += [v, u]
        self.cap += [capacity, 0]
        self.cost += [cost, -cost]
        self.adjacency[u].append(k)
        self.adjacency[v].append(k + 1)
        return k

    def flow_on(self, arc: int) -> int:
        return self.cap[arc ^ 1]

    def min_cost_flow(self, source: int, sink: int, demand: int) -> int:
        """Route ``demand`` units from source to sink at minimum total cost.

        Mutates residual capacities; read arc flows with :meth:`flow_on`.
        Raises :class:`InfeasibleFlow` when the demand cannot be met.
        """
        n = self.n_nodes
        potential = [0] * n
        shipped = 0
        total = 0
        inf = float("inf")
        while shipped < demand:
            dist: list = [inf] * n
            via = [-1] * n
            dist[source] = 0
            heap = [(0, source)]
            while heap:
                d, u = heapq.heappop(heap)
                if d > dist[u]:
                    continue
                for arc in self.adjacency[u]:
                    if self.cap[arc] <= 0:
                        continue
                    v = self.head[arc]
                    nd = d + self.cost[arc] + potential[u] - potential[v]
                    if nd < dist[v]:
                        dist[v] = nd
                        via[v] = arc
                        heapq.heappush(heap, (nd, v))
            if dist[sink] == inf:
                raise InfeasibleFlow(shipped, demand)
            for v in range(n):
                if dist[v] != inf:
                    potential[v] += dist[v]
            push = demand - shipped
            v = sink
            while v != source:
                arc = via[v]
                push = min(push, self.cap[arc])
                v = self.head[arc ^ 1]
            v = sink
            while v != source:
                arc = via[v]
                self.cap[arc] -= push
                self.cap[arc ^ 1] += push
                total += push * self.cost[arc]
                v = self.head[arc ^ 1]
            shipped += push
        return total
