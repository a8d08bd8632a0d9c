import numpy as np
import pytest

from decon.graph import (
    Graph,
    GraphError,
    complete,
    from_edge_list_text,
    line,
    random_connected,
    to_edge_list_text,
)


def test_two_node_random_is_forced():
    g = random_connected(2, 1.0, 0)
    assert g.edges == ((0, 1),)


def test_random_is_connected_and_reproducible():
    a = random_connected(10, 0.5, 7)
    b = random_connected(10, 0.5, 7)
    assert a.edges == b.edges
    assert a.is_connected()


def test_random_seeds_differ():
    a = random_connected(10, 0.5, 1)
    b = random_connected(10, 0.5, 2)
    assert a.edges != b.edges
    assert a.is_connected() and b.is_connected()


def test_line_shapes():
    assert line(2).edges == ((0, 1),)
    g3 = line(3)
    assert g3.edges == ((0, 1), (1, 2))
    assert list(g3.degrees) == [1, 2, 1]
    g10 = line(10)
    assert len(g10.edges) == 9
    assert list(g10.degrees) == [1] + [2] * 8 + [1]


def test_complete_counts():
    assert len(complete(3).edges) == 3
    assert len(complete(4).edges) == 6
    assert complete(2).edges == line(2).edges


def test_generators_symmetric_adjacency_and_connected():
    for seed in range(20):
        g = random_connected(8, 0.35, seed)
        assert np.array_equal(g.adjacency, g.adjacency.T)
        assert not g.adjacency.diagonal().any()
        assert g.is_connected()


def test_disconnected_rejected():
    with pytest.raises(GraphError):
        Graph(4, ((0, 1), (2, 3)))


def test_self_loop_rejected():
    with pytest.raises(GraphError):
        Graph(3, ((0, 0), (0, 1), (1, 2)))


def test_edge_list_round_trip():
    g = random_connected(9, 0.4, 3)
    assert from_edge_list_text(to_edge_list_text(g)) == g


def test_edge_list_parse_errors():
    with pytest.raises(GraphError):
        from_edge_list_text("0 1 2\n")
    with pytest.raises(GraphError):
        from_edge_list_text("\n")
