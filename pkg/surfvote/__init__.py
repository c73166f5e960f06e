from surfvote._version import __version__

# Make the most relevant classes importable from root
from surfvote._core.graph import CompGraph, evaluate, gradients
from surfvote._core.op import Constant, Input
from surfvote.config import TrainConfig, load_config
from surfvote.fields import ColorField, SdfField
from surfvote.trainer import Trainer, TrainState
