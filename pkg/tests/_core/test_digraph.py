import pytest

from surfvote._core.digraph import CyclicDiGraphError, DiGraph, NodeNotFoundError


def make_graph(n_nodes, edges):
    graph = DiGraph()
    for node in range(n_nodes):
        graph.add_node(node)
    for src, dst in edges:
        graph.add_edge(src, dst)
    return graph


def assert_topological(graph, order):
    position = {node: i for i, node in enumerate(order)}
    assert sorted(position) == sorted(graph)
    for src, dst, _ in graph.edges:
        assert position[src] < position[dst]


def test_add_node_is_idempotent():
    graph = DiGraph()
    graph.add_node("x")
    graph.add_node("x")
    assert "x" in graph and len(graph) == 1


def test_add_edge_links_both_directions():
    graph = make_graph(2, [(0, 1)])
    assert list(graph.successors(0)) == [1]
    assert list(graph.predecessors(1)) == [0]


def test_add_edge_with_nonexistent_node():
    graph = DiGraph()
    graph.add_node("x")
    with pytest.raises(NodeNotFoundError):
        graph.add_edge("x", "y")


def test_edge_data_accumulates():
    graph = make_graph(2, [])
    graph.add_edge(0, 1)
    assert graph.get_edge_data(0, 1) == set()
    graph.add_edge(0, 1, "t0")
    graph.add_edge(0, 1, "t1", "t2")
    assert graph.get_edge_data(0, 1) == {"t0", "t1", "t2"}


def test_edges_and_in_degree():
    graph = make_graph(4, [(0, 1), (1, 3), (2, 3)])
    assert sorted((s, d) for s, d, _ in graph.edges) == [(0, 1), (1, 3), (2, 3)]
    assert [graph.in_degree(n) for n in range(4)] == [0, 1, 0, 2]


def test_ancestors_and_descendants():
    # 0 -> 1 -> 3 -> 5 and 0 -> 2 -> 4 -> 5
    graph = make_graph(6, [(0, 1), (1, 3), (3, 5), (0, 2), (2, 4), (4, 5)])
    assert graph.ancestors(0) == set()
    assert graph.ancestors(4) == {0, 2}
    assert graph.ancestors(5) == {0, 1, 2, 3, 4}
    assert graph.descendants(2) == {4, 5}
    assert graph.descendants(5) == set()
    with pytest.raises(NodeNotFoundError):
        graph.ancestors(10)


@pytest.mark.parametrize(
    "n_nodes,edges",
    [
        (0, []),
        (1, []),
        (
            8,
            [(0, 2), (0, 3), (2, 4), (2, 6), (4, 7), (6, 7), (3, 5), (1, 5), (3, 7)],
        ),
        (5, [(0, 1), (1, 4), (2, 1), (2, 3), (3, 4)]),
    ],
)
def test_topological_sort(n_nodes, edges):
    graph = make_graph(n_nodes, edges)
    assert_topological(graph, graph.topological_sort())


def test_topological_sort_long_chain():
    # deep enough to overflow a recursive implementation
    n = 5000
    graph = make_graph(n, [(i, i + 1) for i in range(n - 1)])
    assert graph.topological_sort() == list(range(n))


def test_topological_sort_cyclic_graph():
    graph = make_graph(3, [(0, 1), (1, 2), (2, 0)])
    with pytest.raises(CyclicDiGraphError):
        graph.topological_sort()


def test_node_ordering():
    graph = DiGraph()
    for node in [10, 0, 20, 40, 30]:
        graph.add_node(node)
    assert list(graph) == [10, 0, 20, 40, 30]


def test_clear():
    graph = make_graph(2, [])
    graph.add_edge(0, 1, "t")
    graph.clear()
    assert 0 not in graph and 1 not in graph
    assert list(graph.edges) == []
