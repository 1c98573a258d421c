from .autograd import AutogradError, Tensor, no_grad
from .checkpoint import Checkpoint
from .networks import (
    NetworkConfig,
    WeightVector,
    backward,
    encode,
    encode_graph,
    encode_set,
    init_weights,
    layout,
    policy_forward,
    pool,
    port_config,
    q_forward,
    tsptw_config,
)
from .obs import Batch, Observation, stack
from .optim import Adam
