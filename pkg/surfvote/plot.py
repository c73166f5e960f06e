__all__ = ["plot_graph"]

import io
import os
from typing import Optional

try:
    import pydot
except ImportError:  # pragma: no cover
    raise ImportError(
        "Could not import pydot package. "
        "You can install with `pip install pydot` or "
        "`pip install surfvote[viz]`"
    )

from surfvote._core.graph import CompGraph
from surfvote._core.op import ConstantOp, InputOp
from surfvote._core.utils import make_name


def quoted(s):
    return '"{}"'.format(s)


def dot_node(name, label):
    return pydot.Node(name=quoted(name), label=quoted(label), shape="rect")


def dot_input_node(name, label):
    return pydot.Node(
        name=quoted(name), label=quoted(label), shape="invhouse", color="green"
    )


def dot_constant_node(name, label):
    return pydot.Node(
        name=quoted(name), label=quoted(label), shape="ellipse", color="gray"
    )


def dot_edge(src, dst, label, color="black"):
    return pydot.Edge(
        src=quoted(src), dst=quoted(dst), label=quoted(label), color=color
    )


def dummy_dot_node(name):
    return pydot.Node(
        name=quoted(name),
        shape="rect",
        color="white",
        fontcolor="white",
        fixedsize=True,
        width=0.0,
        height=0.0,
        fontsize=0.0,
    )


def graph_to_dot(graph: CompGraph, show_constants: bool = True, **dot_kwargs):
    """Build the dot graph of a computation graph: one node per op, one edge per
    tensor flowing between ops, the graph inputs as green houses and the outputs
    as dangling edges."""
    container = pydot.Dot(graph_type="digraph", **dot_kwargs)
    root = graph.name
    inputs = set(graph.inputs)

    for tensor in graph.inputs:
        container.add_node(
            dot_input_node(make_name(root, "input", tensor.name), tensor.name)
        )

    hidden = set()
    for op in graph.ops:
        name = make_name(root, op.name)
        if isinstance(op, InputOp):
            container.add_node(dot_input_node(name, op.name))
        elif isinstance(op, ConstantOp):
            if not show_constants:
                hidden.add(op)
                continue
            container.add_node(dot_constant_node(name, op.name))
        else:
            container.add_node(dot_node(name, type(op).__name__))

        for tensor in op.inputs:
            if tensor in inputs:
                src = make_name(root, "input", tensor.name)
                container.add_edge(dot_edge(src, name, tensor.name, "green"))

    for parent, op, tensors in graph.graph.edges:
        if parent in hidden:
            continue
        for tensor in tensors:
            src = make_name(root, parent.name)
            dst = make_name(root, op.name)
            container.add_edge(dot_edge(src, dst, tensor.name))

    for output in graph.outputs:
        dst = make_name(root, "output", output.name)
        src = (
            make_name(root, "input", output.name)
            if output in inputs
            else make_name(root, output.op.name)
        )
        container.add_node(dummy_dot_node(dst))
        container.add_edge(dot_edge(src, dst, output.name))
    return container


def plot_graph(
    graph: CompGraph,
    filename: Optional[str] = None,
    show: bool = False,
    show_constants: bool = True,
    prog: str = "dot",
    **dot_kwargs
) -> pydot.Dot:
    """Plot a computation graph to file and/or display it.

    Rendering to an image requires graphviz; a ``.dot`` filename writes the
    graph source and needs pydot only. Displaying requires matplotlib.

    Parameters
    ----------
    graph
        The computation graph to plot.

    filename
        Filename (optional). The format is taken from the extension.

    show
        Whether to display the plot in the screen or not.

    show_constants
        Whether to draw the constant ops (scalars and fixed arrays) or not.

    prog
        Program to use to process the dot file into a graph.

    dot_kwargs
        Keyword arguments to pydot.Dot.

    Returns
    -------
    dot_graph
        Dot graph of the given computation graph.
    """
    dot_graph = graph_to_dot(graph, show_constants, **dot_kwargs)

    if filename:
        _, ext = os.path.splitext(filename)
        ext = ext.lstrip(".").lower()
        if ext in ("dot", "gv"):
            with open(filename, "w") as fh:
                fh.write(dot_graph.to_string())
        else:
            with open(filename, "wb") as fh:
                fh.write(dot_graph.create(format=ext, prog=prog))

    if show:  # pragma: no cover
        import matplotlib.pyplot as plt
        import matplotlib.image as mpimg

        png = dot_graph.create(format="png", prog=prog)
        img = mpimg.imread(io.BytesIO(png))
        plt.imshow(img, aspect="equal")
        plt.axis("off")
        plt.show()

    return dot_graph
