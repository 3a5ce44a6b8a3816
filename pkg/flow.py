"""
Layered Min-Cost Flow
Successive shortest paths for source -> plants -> depots -> customers networks
"""

import heapq
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from errors import CapacityShortfallError, InfeasibleNetworkError
from instance import Individual, Instance

logger = logging.getLogger(__name__)

INF = float('inf')
Number = Union[int, float]


@dataclass(frozen=True, eq=False)
class LayeredNetwork:
    """
    Transport network over a subset of facilities

    c and d are indexed by position in plant_ids / depot_ids; flows are
    reported against the full instance dimensions.
    """

    plant_caps: np.ndarray
    depot_caps: np.ndarray
    c: np.ndarray
    d: np.ndarray
    q: np.ndarray
    plant_ids: np.ndarray
    depot_ids: np.ndarray
    n_plants_total: int
    n_depots_total: int

    def __post_init__(self):
        n_p, n_d, n_k = len(self.plant_caps), len(self.depot_caps), len(self.q)
        if self.c.shape != (n_p, n_d) or self.d.shape != (n_d, n_k):
            raise ValueError(
                f"Cost matrices {self.c.shape}/{self.d.shape} do not match "
                f"{n_p} plants, {n_d} depots, {n_k} customers"
            )
        if len(self.plant_ids) != n_p or len(self.depot_ids) != n_d:
            raise ValueError("Index maps must match the capacity vectors")
        for name in ('plant_caps', 'depot_caps', 'c', 'd', 'q'):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"Network '{name}' must be non-negative")

    @property
    def total_demand(self) -> int:
        return int(self.q.sum())

    @classmethod
    def from_instance(cls, inst: Instance, ind: Optional[Individual] = None,
                      c: Optional[np.ndarray] = None,
                      d: Optional[np.ndarray] = None) -> 'LayeredNetwork':
        """
        Build the network restricted to the facilities open in ind

        Args:
            inst: Problem instance
            ind: Open/close mask; None keeps every facility
            c: Replacement plant->depot unit costs (full |I|x|J|)
            d: Replacement depot->customer unit costs (full |J|x|K|)
        """
        c = inst.c if c is None else np.asarray(c)
        d = inst.d if d is None else np.asarray(d)
        if ind is None:
            plant_ids = np.arange(inst.n_plants)
            depot_ids = np.arange(inst.n_depots)
        else:
            plant_ids = np.flatnonzero(ind.y)
            depot_ids = np.flatnonzero(ind.z)
        return cls(
            plant_caps=inst.b[plant_ids],
            depot_caps=inst.p[depot_ids],
            c=c[np.ix_(plant_ids, depot_ids)],
            d=d[depot_ids, :],
            q=inst.q,
            plant_ids=plant_ids,
            depot_ids=depot_ids,
            n_plants_total=inst.n_plants,
            n_depots_total=inst.n_depots,
        )


@dataclass
class FlowPlan:
    """x: plant->depot flows (|I|x|J|), s: depot->customer flows (|J|x|K|)"""

    x: np.ndarray
    s: np.ndarray
    cost: Number

    @property
    def first_stage_total(self) -> int:
        return int(self.x.sum())

    @property
    def second_stage_total(self) -> int:
        return int(self.s.sum())

    def plant_outflow(self) -> np.ndarray:
        return self.x.sum(axis=1)

    def depot_throughput(self) -> np.ndarray:
        return self.s.sum(axis=1)


class _ResidualGraph:
    """Arc list with paired reverse arcs: arc e and e ^ 1"""

    def __init__(self, n_nodes: int):
        self.adjacency: List[List[int]] = [[] for _ in range(n_nodes)]
        self.head: List[int] = []
        self.capacity: List[int] = []
        self.cost: List[Number] = []

    def add_arc(self, tail: int, head: int, capacity: int, cost: Number) -> int:
        arc = len(self.head)
        self.head.extend((head, tail))
        self.capacity.extend((capacity, 0))
        self.cost.extend((cost, -cost))
        self.adjacency[tail].append(arc)
        self.adjacency[head].append(arc + 1)
        return arc

    def flow(self, arc: int) -> int:
        return self.capacity[arc ^ 1]

    @property
    def n_nodes(self) -> int:
        return len(self.adjacency)


def _bellman_ford(graph: _ResidualGraph, source: int) -> List[Number]:
    dist: List[Number] = [INF] * graph.n_nodes
    dist[source] = 0
    for _ in range(graph.n_nodes - 1):
        changed = False
        for tail in range(graph.n_nodes):
            if dist[tail] == INF:
                continue
            for arc in graph.adjacency[tail]:
                if graph.capacity[arc] > 0:
                    candidate = dist[tail] + graph.cost[arc]
                    if candidate < dist[graph.head[arc]]:
                        dist[graph.head[arc]] = candidate
                        changed = True
        if not changed:
            break
    # unreachable nodes never enter the residual graph
    return [0 if value == INF else value for value in dist]


def _dijkstra(graph: _ResidualGraph, source: int,
              potential: List[Number]) -> Tuple[List[Number], List[int]]:
    dist: List[Number] = [INF] * graph.n_nodes
    via: List[int] = [-1] * graph.n_nodes
    dist[source] = 0
    heap = [(0, source)]
    while heap:
        du, tail = heapq.heappop(heap)
        if du > dist[tail]:
            continue
        pt = potential[tail]
        for arc in graph.adjacency[tail]:
            if graph.capacity[arc] <= 0:
                continue
            head = graph.head[arc]
            reduced = graph.cost[arc] + pt - potential[head]
            if reduced < 0:
                reduced = 0  # float round-off only; integer reduced costs are exact
            candidate = du + reduced
            if candidate < dist[head]:
                dist[head] = candidate
                via[head] = arc
                heapq.heappush(heap, (candidate, head))
    return dist, via


def _successive_shortest_paths(graph: _ResidualGraph, source: int, sink: int,
                               required: int) -> int:
    potential = _bellman_ford(graph, source)
    sent = 0
    augmentations = 0
    while sent < required:
        dist, via = _dijkstra(graph, source, potential)
        if dist[sink] == INF:
            raise InfeasibleNetworkError(
                f"Only {sent} of {required} units could be routed to customers"
            )
        for node, value in enumerate(dist):
            if value != INF:
                potential[node] += value

        push = required - sent
        node = sink
        while node != source:
            arc = via[node]
            push = min(push, graph.capacity[arc])
            node = graph.head[arc ^ 1]
        node = sink
        while node != source:
            arc = via[node]
            graph.capacity[arc] -= push
            graph.capacity[arc ^ 1] += push
            node = graph.head[arc ^ 1]
        sent += push
        augmentations += 1
    return augmentations


def min_cost_flow(net: LayeredNetwork) -> FlowPlan:
    """
    Minimum-cost routing of every customer's demand

    Depots are split into an in-node and an out-node joined by an arc of
    capacity p_j. Integer costs are handled in exact integer arithmetic.

    Args:
        net: Layered network; capacities, costs and demands non-negative

    Returns:
        Optimal flow plan; integral whenever capacities and demands are

    Raises:
        CapacityShortfallError: a stage's total capacity is below demand
        InfeasibleNetworkError: demand cannot be routed
    """
    n_plants, n_depots, n_customers = len(net.plant_caps), len(net.depot_caps), len(net.q)
    x = np.zeros((net.n_plants_total, net.n_depots_total), dtype=np.int64)
    s = np.zeros((net.n_depots_total, n_customers), dtype=np.int64)
    demand = net.total_demand

    float_costs = net.c.dtype.kind == 'f' or net.d.dtype.kind == 'f'
    zero_cost: Number = 0.0 if float_costs else 0
    if demand == 0:
        return FlowPlan(x=x, s=s, cost=zero_cost)

    plant_capacity = int(net.plant_caps.sum())
    if plant_capacity < demand:
        raise CapacityShortfallError('plant', plant_capacity, demand)
    depot_capacity = int(net.depot_caps.sum())
    if depot_capacity < demand:
        raise CapacityShortfallError('depot', depot_capacity, demand)

    source = 0
    first_plant = 1
    first_depot_in = first_plant + n_plants
    first_depot_out = first_depot_in + n_depots
    first_customer = first_depot_out + n_depots
    sink = first_customer + n_customers
    graph = _ResidualGraph(sink + 1)

    plant_caps = net.plant_caps.tolist()
    depot_caps = net.depot_caps.tolist()
    demands = net.q.tolist()
    c = net.c.tolist()
    d = net.d.tolist()

    for i, cap in enumerate(plant_caps):
        graph.add_arc(source, first_plant + i, cap, zero_cost)
    x_arcs = {}
    for i in range(n_plants):
        for j in range(n_depots):
            x_arcs[i, j] = graph.add_arc(first_plant + i, first_depot_in + j, plant_caps[i], c[i][j])
    for j, cap in enumerate(depot_caps):
        graph.add_arc(first_depot_in + j, first_depot_out + j, cap, zero_cost)
    s_arcs = {}
    for j in range(n_depots):
        for k in range(n_customers):
            if demands[k] > 0:
                s_arcs[j, k] = graph.add_arc(first_depot_out + j, first_customer + k, demands[k], d[j][k])
    for k, amount in enumerate(demands):
        graph.add_arc(first_customer + k, sink, amount, zero_cost)

    augmentations = _successive_shortest_paths(graph, source, sink, demand)

    cost = zero_cost
    for (i, j), arc in x_arcs.items():
        amount = graph.flow(arc)
        if amount:
            x[net.plant_ids[i], net.depot_ids[j]] = amount
            cost += c[i][j] * amount
    for (j, k), arc in s_arcs.items():
        amount = graph.flow(arc)
        if amount:
            s[net.depot_ids[j], k] = amount
            cost += d[j][k] * amount

    logger.debug(
        f"Min-cost flow {n_plants}x{n_depots}x{n_customers}: demand {demand}, "
        f"{augmentations} augmentations, cost {cost}"
    )
    return FlowPlan(x=x, s=s, cost=cost)


def check_flow_plan(net: LayeredNetwork, plan: FlowPlan, rel_tol: float = 1e-9) -> List[str]:
    """
    List every FlowPlan invariant the plan violates

    Returns:
        Human-readable violations; empty when the plan is valid
    """
    problems = []
    if np.any(plan.x < 0) or np.any(plan.s < 0):
        problems.append("negative flow")

    closed_plants = np.setdiff1d(np.arange(net.n_plants_total), net.plant_ids)
    closed_depots = np.setdiff1d(np.arange(net.n_depots_total), net.depot_ids)
    if plan.x[closed_plants].any() or plan.x[:, closed_depots].any() or plan.s[closed_depots].any():
        problems.append("flow through a closed facility")

    inflow = plan.x.sum(axis=0)
    outflow = plan.s.sum(axis=1)
    if not np.array_equal(inflow, outflow):
        problems.append("depot inflow differs from outflow")
    if not np.array_equal(plan.s.sum(axis=0), net.q):
        problems.append("customer inflow differs from demand")
    if np.any(plan.x.sum(axis=1)[net.plant_ids] > net.plant_caps):
        problems.append("plant capacity exceeded")
    if np.any(outflow[net.depot_ids] > net.depot_caps):
        problems.append("depot capacity exceeded")

    recomputed = float(
        (net.c * plan.x[np.ix_(net.plant_ids, net.depot_ids)]).sum()
        + (net.d * plan.s[net.depot_ids, :]).sum()
    )
    if abs(recomputed - float(plan.cost)) > rel_tol * max(1.0, abs(recomputed)):
        problems.append(f"cost {plan.cost} differs from recomputed {recomputed}")
    return problems
