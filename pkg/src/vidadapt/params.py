"""Named parameters and partition bookkeeping for checkpoints and adapters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .tensor import Tensor


@dataclass
class Parameter:
    """A named weight.  Frozen (trainable=False) parameters never receive
    optimizer updates and stay bit-identical across training steps."""

    name: str
    tensor: Tensor
    trainable: bool = True


ParamDict = dict[str, Parameter]


def make_param(name: str, data: np.ndarray, trainable: bool = True) -> Parameter:
    return Parameter(name, Tensor(data, requires_grad=trainable), trainable)


def add_param(params: ParamDict, p: Parameter):
    if p.name in params:
        raise ContractError(f"duplicate parameter name: {p.name}")
    params[p.name] = p


def set_trainable(params: ParamDict, predicate) -> list[str]:
    """Mark exactly the parameters matched by `predicate(name)` as trainable.

    requires_grad follows trainability so the tape only tracks what the
    current stage optimises.  Returns the trainable names, in order.
    """
    names = []
    for name, p in params.items():
        on = bool(predicate(name))
        p.trainable = on
        p.tensor.requires_grad = on
        p.tensor.grad = None
        if on:
            names.append(name)
    return names


def state_bytes(params: ParamDict) -> dict[str, bytes]:
    """Byte snapshot of every parameter, for partition-discipline diffing."""
    return {name: p.tensor.data.tobytes() for name, p in params.items()}


def changed_names(before: dict[str, bytes], after: dict[str, bytes]) -> set[str]:
    if before.keys() != after.keys():
        raise ContractError("parameter name sets differ between snapshots")
    return {name for name in before if before[name] != after[name]}
