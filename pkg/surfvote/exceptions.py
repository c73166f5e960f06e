"""Exceptions raised by surfvote."""


class ShapeMismatchError(ValueError):
    """Raised when an array fed to (or computed by) a graph node does not have the
    shape the node declares.

    Parameters
    ----------
    node_name
        Name of the offending node.

    message
        Details of the mismatch.
    """

    def __init__(self, node_name: str, message: str):
        super().__init__("{}: {}".format(node_name, message))
        self.node_name = node_name


class NonFiniteError(ValueError):
    """Raised when an input that must be finite holds NaN or infinity."""


class DegenerateBatchError(RuntimeError):
    """Raised when every query point of a batch had to be dropped."""


class DegenerateBufferError(RuntimeError):
    """Raised when a weight buffer holds no usable weight to resample from."""


class CheckpointError(RuntimeError):
    """Raised when a checkpoint cannot be read back (wrong version, truncated or
    corrupt file)."""
