from collections import OrderedDict, defaultdict
from typing import Dict, Hashable, Iterator, List, Set


class NodeNotFoundError(Exception):
    """Exception raised when attempting to operate on a node that
    does not exist in the graph.
    """


class CyclicDiGraphError(Exception):
    """Exception raised when graph has cycles.
    """


_VISITING = 1
_DONE = 2


class DiGraph:
    """Directed graph stored as ordered adjacency dicts.

    Nodes keep their insertion order. Edge data is a set per (source, destination)
    pair; computation graphs store there the tensors that flow along the edge.
    """

    def __init__(self, name=None):
        # source node -> (destination node -> edge data)
        self._successors = OrderedDict()  # type: Dict[Hashable, Dict[Hashable, Set]]
        self._predecessors = OrderedDict()  # type: Dict[Hashable, Dict[Hashable, Set]]
        self.name = name

    def add_node(self, node):
        if node in self:
            return
        self._successors[node] = defaultdict(set)
        self._predecessors[node] = defaultdict(set)

    def add_edge(self, from_node, to_node, *edge_data):
        self._check_node_in_graph(from_node)
        self._check_node_in_graph(to_node)
        self._successors[from_node][to_node].update(edge_data)
        self._predecessors[to_node][from_node].update(edge_data)

    def get_edge_data(self, from_node, to_node) -> Set:
        self._check_node_in_graph(from_node)
        self._check_node_in_graph(to_node)
        return self._successors[from_node][to_node]

    def __contains__(self, node) -> bool:
        return node in self._successors

    def __iter__(self) -> Iterator:
        return iter(self._successors)

    def __len__(self) -> int:
        return len(self._successors)

    def clear(self):
        self._successors.clear()
        self._predecessors.clear()

    @property
    def edges(self):
        for from_node, destinations in self._successors.items():
            for to_node, edge_data in destinations.items():
                yield from_node, to_node, edge_data

    def successors(self, node) -> Iterator:
        self._check_node_in_graph(node)
        return iter(self._successors[node])

    def predecessors(self, node) -> Iterator:
        self._check_node_in_graph(node)
        return iter(self._predecessors[node])

    def in_degree(self, node) -> int:
        self._check_node_in_graph(node)
        return len(self._predecessors[node])

    def ancestors(self, node) -> Set:
        self._check_node_in_graph(node)
        return self._reach(node, self._predecessors)

    def descendants(self, node) -> Set:
        self._check_node_in_graph(node)
        return self._reach(node, self._successors)

    @staticmethod
    def _reach(node, adjacency) -> Set:
        found = set()
        stack = list(adjacency[node])
        while stack:
            current = stack.pop()
            if current in found:
                continue
            found.add(current)
            stack.extend(adjacency[current])
        return found

    def _check_node_in_graph(self, node):
        if node not in self:
            raise NodeNotFoundError("{} is not in the graph.".format(node))

    def topological_sort(self) -> List:
        """Sort the nodes so that every edge points forward.

        Iterative depth-first search, started from the nodes with fewer
        predecessors first (inputs). Also works as a test of acyclicity.

        Raises
        ------
        CyclicDiGraphError
            If the graph has a cycle.
        """
        state = {}  # type: Dict[Hashable, int]
        finished = []  # type: List[Hashable]
        roots = sorted(self._predecessors, key=lambda k: len(self._predecessors[k]))

        for root in roots:
            if root in state:
                continue
            state[root] = _VISITING
            stack = [(root, iter(self._successors[root]))]
            while stack:
                node, children = stack[-1]
                for child in children:
                    child_state = state.get(child)
                    if child_state is None:
                        state[child] = _VISITING
                        stack.append((child, iter(self._successors[child])))
                        break
                    if child_state == _VISITING:
                        raise CyclicDiGraphError("DiGraph is not acyclic.")
                else:
                    stack.pop()
                    state[node] = _DONE
                    finished.append(node)

        finished.reverse()
        return finished
