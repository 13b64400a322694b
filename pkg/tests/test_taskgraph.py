import math

import pytest
from hypothesis import given, settings
from hypothesis.strategies import integers

from mecsim.models import TaskGraphModel
from mecsim.taskgraph import (
    CyclicGraph, DanglingComponent, DuplicateEdge, NegativeWeight, OutputHasSuccessor,
    NonFiniteWeight, UnknownComponent, UnknownEndpoint, chain, sources, successors, topo_sort, validate,
)
from mecsim.templates import face_like, layered_random, qr_like

DIAMOND = {
    "components": [{"id": i, "cycles": 1e8} for i in range(4)],
    "edges": [
        {"src": 0, "dst": 1, "bits": 1.0},
        {"src": 0, "dst": 2, "bits": 1.0},
        {"src": 1, "dst": 3, "bits": 1.0},
        {"src": 2, "dst": 3, "bits": 1.0},
    ],
    "output": 3,
}


def _raw(n, edges, output):
    return {
        "components": [{"id": i, "cycles": 1.0} for i in range(n)],
        "edges": [{"src": s, "dst": d, "bits": b} for s, d, b in edges],
        "output": output,
    }


@pytest.mark.parametrize(
    "raw, error",
    [
        (_raw(2, [(0, 1, 1.0), (1, 0, 1.0)], 1), CyclicGraph),
        (_raw(3, [(0, 2, 1.0)], 2), DanglingComponent),
        (_raw(2, [(0, 1, 1.0), (1, 0, 1.0)], 0), CyclicGraph),
        (_raw(3, [(0, 1, 1.0), (1, 2, 1.0), (2, 1, 1.0)], 2), CyclicGraph),
        (_raw(2, [(0, 1, 1.0), (0, 5, 1.0)], 1), UnknownEndpoint),
        (_raw(2, [(0, 1, 1.0), (0, 1, 2.0)], 1), DuplicateEdge),
        (_raw(2, [(0, 1, -1.0)], 1), NegativeWeight),
        (_raw(2, [(0, 1, math.nan)], 1), NonFiniteWeight),
        (_raw(2, [(0, 1, math.inf)], 1), NonFiniteWeight),
        (_raw(2, [(0, 0, 1.0), (0, 1, 1.0)], 1), CyclicGraph),
        (_raw(3, [(0, 1, 1.0), (1, 2, 1.0)], 1), OutputHasSuccessor),
    ],
)
def test_validate_rejects(raw, error):
    with pytest.raises(error):
        validate(raw)


def test_validation_errors_are_value_errors():
    with pytest.raises(ValueError):
        validate(_raw(3, [(0, 2, 1.0)], 2))


def test_chain_is_valid():
    graph = chain([1.0, 2.0, 3.0], [10.0, 20.0])
    assert graph.output == 2
    assert graph.bits(1, 2) == 20.0


def test_topo_sort_examples():
    assert topo_sort(chain([5.0], [])) == [0]
    assert topo_sort(chain([1.0, 1.0, 1.0], [0.0, 0.0])) == [0, 1, 2]
    assert topo_sort(validate(DIAMOND)) == [0, 1, 2, 3]
    # frontier {2, 3} releases the smaller id first
    assert topo_sort(validate(_raw(4, [(3, 1, 1.0), (2, 1, 1.0), (1, 0, 1.0)], 0))) == [2, 3, 1, 0]


def test_successors():
    diamond = validate(DIAMOND)
    assert successors(diamond, 0) == {1, 2}
    assert successors(diamond, 3) == frozenset()
    assert successors(chain([1.0, 1.0, 1.0], [0.0, 0.0]), 1) == {2}
    with pytest.raises(UnknownComponent):
        successors(diamond, 9)


def test_sources_and_predecessors():
    diamond = validate(DIAMOND)
    assert sources(diamond) == [0]
    assert diamond.predecessors(3) == (1, 2)
    assert diamond.dag.number_of_edges() == 4
    assert diamond.cycles(3) == 1e8


def test_templates_are_valid_graphs():
    face = face_like()
    assert len(face) == 6
    assert face.output == 5
    qr = qr_like()
    assert len(qr) == 10
    assert successors(qr, 0) == {1, 3, 5, 7}
    assert topo_sort(qr)[-1] == qr.output


def test_layered_random_singleton_and_determinism():
    single = layered_random({"layers": 1, "width": 1}, seed=3)
    assert len(single) == 1
    assert single.edges == ()
    assert layered_random(None, seed=11) == layered_random(None, seed=11)


@settings(deadline=None)
@given(integers(min_value=0, max_value=2**31 - 1), integers(min_value=1, max_value=5), integers(min_value=1, max_value=4))
def test_topo_order_respects_every_edge(seed, layers, width):
    graph = layered_random({"layers": layers, "width": width, "edge_prob": 0.5}, seed)
    order = topo_sort(graph)
    pos = {n: k for k, n in enumerate(order)}
    assert sorted(order) == graph.ids
    assert order[-1] == graph.output
    assert all(pos[e.src] < pos[e.dst] for e in graph.edges)


@settings(deadline=None)
@given(integers(min_value=0, max_value=10_000))
def test_graph_model_round_trip(seed):
    graph = layered_random(None, seed)
    assert TaskGraphModel.from_graph(graph).to_graph() == graph
