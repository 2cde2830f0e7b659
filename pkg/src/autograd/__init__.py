"""
DeskAIA Autograd Module
Dense float64 tensors with tape-based reverse-mode gradients
"""
from .tensor import Tensor, Tape, ResourceMeter, backward, current_meter, meter_scope
from .ops import (
    matmul, transpose, add, mul, relu, scale, elementwise, sum_all,
    concat_rows, take_rows, index_row, stack_rows,
    softmax_rows, layer_norm_rows, bce_with_logits, mean_of,
)
from .optim import SGD, sgd_step
