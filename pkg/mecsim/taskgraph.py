"""
Task-graph model: a DAG of application components with CPU-cycle weights on
nodes and data volumes on edges, held in a networkx DiGraph.

Entry points: validate(raw) -> TaskGraph, topo_sort(graph) -> list[int]
"""

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import networkx as nx


class GraphValidationError(ValueError):
    """Raised when a raw graph violates a task-graph invariant."""


class CyclicGraph(GraphValidationError):
    pass


class DanglingComponent(GraphValidationError):
    pass


class OutputHasSuccessor(GraphValidationError):
    pass


class UnknownEndpoint(GraphValidationError):
    pass


class DuplicateEdge(GraphValidationError):
    pass


class NegativeWeight(GraphValidationError):
    pass


class NonFiniteWeight(NegativeWeight):
    pass


class UnknownComponent(KeyError):
    pass


@dataclass(frozen=True)
class Component:
    id: int
    cycles: float
    label: str | None = None


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    bits: float


def _digraph(components, edges) -> nx.DiGraph:
    dag = nx.DiGraph()
    for c in components:
        dag.add_node(c.id, cycles=c.cycles)
    for e in edges:
        dag.add_edge(e.src, e.dst, bits=e.bits)
    return dag


@dataclass(frozen=True)
class TaskGraph:
    components: tuple[Component, ...]
    edges: tuple[Edge, ...]
    output: int
    dag: nx.DiGraph = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "dag", _digraph(self.components, self.edges))

    @property
    def ids(self) -> list[int]:
        return sorted(self.dag.nodes)

    def cycles(self, node: int) -> float:
        return self.dag.nodes[node]["cycles"]

    def bits(self, src: int, dst: int) -> float:
        return self.dag.edges[src, dst]["bits"]

    def predecessors(self, node: int) -> tuple[int, ...]:
        return tuple(sorted(self.dag.predecessors(node)))

    def __len__(self) -> int:
        return len(self.components)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _check_weight(value: float, what: str) -> None:
    if not math.isfinite(value):
        raise NonFiniteWeight(f"{what} has non-finite weight {value}")
    if value < 0:
        raise NegativeWeight(f"{what} has negative weight {value}")


def validate(raw: Mapping[str, Any]) -> TaskGraph:
    """
    Build a TaskGraph from a raw mapping with `components`, `edges`, `output`.

    Checks run in a fixed order: weights, endpoints, duplicate edges, cycles,
    output successors, dangling components. The first failure is raised.
    """
    components = [
        Component(id=int(c["id"]), cycles=float(c["cycles"]), label=c.get("label"))
        for c in raw.get("components", [])
    ]
    edges = [Edge(src=int(e["src"]), dst=int(e["dst"]), bits=float(e["bits"]))
             for e in raw.get("edges", [])]
    output = int(raw["output"])

    ids = [c.id for c in components]
    if len(set(ids)) != len(ids):
        raise GraphValidationError(f"duplicate component ids in {sorted(ids)}")
    if sorted(ids) != list(range(len(ids))):
        raise GraphValidationError("component ids must be dense integers 0..|V|-1")

    for c in components:
        _check_weight(c.cycles, f"component {c.id}")
    for e in edges:
        _check_weight(e.bits, f"edge ({e.src},{e.dst})")

    known = set(ids)
    if output not in known:
        raise UnknownEndpoint(f"output {output} is not a component")
    for e in edges:
        if e.src not in known or e.dst not in known:
            raise UnknownEndpoint(f"edge ({e.src},{e.dst}) references an unknown component")

    seen: set[tuple[int, int]] = set()
    for e in edges:
        if (e.src, e.dst) in seen:
            raise DuplicateEdge(f"edge ({e.src},{e.dst}) appears more than once")
        seen.add((e.src, e.dst))

    dag = _digraph(components, edges)
    if not nx.is_directed_acyclic_graph(dag):
        raise CyclicGraph("task graph contains a directed cycle")

    if dag.out_degree(output) > 0:
        raise OutputHasSuccessor(f"output {output} has outgoing edges")
    dangling = sorted(n for n in dag.nodes if dag.out_degree(n) == 0 and n != output)
    if dangling:
        raise DanglingComponent(f"component {dangling[0]} has no outgoing edge and is not the output")

    return TaskGraph(
        components=tuple(sorted(components, key=lambda c: c.id)),
        edges=tuple(sorted(edges, key=lambda e: (e.src, e.dst))),
        output=output,
    )


def chain(cycles: list[float], bits: list[float]) -> TaskGraph:
    """Chain 0 -> 1 -> ... -> n-1 with the last component as output."""
    if len(bits) != max(len(cycles) - 1, 0):
        raise GraphValidationError("a chain of n components needs n-1 edge volumes")
    return validate({
        "components": [{"id": i, "cycles": c} for i, c in enumerate(cycles)],
        "edges": [{"src": i, "dst": i + 1, "bits": b} for i, b in enumerate(bits)],
        "output": len(cycles) - 1,
    })


def to_dict(graph: TaskGraph) -> dict:
    return {
        "components": [
            {"id": c.id, "cycles": c.cycles, **({"label": c.label} if c.label is not None else {})}
            for c in graph.components
        ],
        "edges": [{"src": e.src, "dst": e.dst, "bits": e.bits} for e in graph.edges],
        "output": graph.output,
    }


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------

def topo_sort(graph: TaskGraph) -> list[int]:
    """Kahn order, removing the smallest id from the frontier first."""
    try:
        return list(nx.lexicographical_topological_sort(graph.dag))
    except nx.NetworkXUnfeasible as exc:
        raise CyclicGraph("task graph contains a directed cycle") from exc


def successors(graph: TaskGraph, node: int) -> frozenset[int]:
    if node not in graph.dag:
        raise UnknownComponent(node)
    return frozenset(graph.dag.successors(node))


def sources(graph: TaskGraph) -> list[int]:
    """Components with zero in-degree."""
    return sorted(n for n, deg in graph.dag.in_degree() if deg == 0)
