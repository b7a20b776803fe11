from .tensor import (
    NonFiniteError,
    Parameter,
    ShapeError,
    Tape,
    Tensor,
    add,
    affine,
    as_tensor,
    concat,
    constant,
    conv1d,
    dropout,
    gru,
    is_recording,
    log_softmax,
    matmul,
    max_pool,
    maxout,
    mul,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    take,
    tanh,
    total,
    weighted_sum,
)
from .optim import (
    AdadeltaState,
    ClipState,
    adadelta_step,
    clip_gradients,
    epsilon_schedule,
    global_norm,
    weight_decay,
)
from .checkpoint import assign, config_hash, load_checkpoint, save_checkpoint
