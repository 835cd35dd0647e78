"""Adam with decoupled weight decay and the linear warm-up / linear decay schedule."""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ContractError, FrozenParameterError


class AdamState:
    """Per-parameter moments plus the shared schedule.

    Effective lr rises linearly to `base_lr` over the first
    `warmup_proportion` fraction of `total_steps`, then decays linearly
    to zero at `total_steps`.
    """

    def __init__(self, params, base_lr, total_steps, warmup_proportion=0.1,
                 beta1=0.9, beta2=0.999, weight_decay=0.01, eps=1e-8,
                 allow_missing=False):
        if total_steps <= 0:
            raise ContractError("total_steps must be positive")
        self.params = list(params)
        # multi-task round-robin loops only touch one head per step
        self.allow_missing = allow_missing
        self.base_lr = float(base_lr)
        self.total_steps = int(total_steps)
        self.warmup_proportion = float(warmup_proportion)
        self.beta1 = beta1
        self.beta2 = beta2
        self.weight_decay = weight_decay
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def effective_lr(self, step=None):
        """Schedule value at `step` (1-based; defaults to the current count)."""
        s = self.step_count if step is None else step
        warm = self.warmup_proportion * self.total_steps
        if warm > 0 and s <= warm:
            return self.base_lr * s / warm
        if s >= self.total_steps:
            return 0.0
        return self.base_lr * (self.total_steps - s) / (self.total_steps - warm)

    def sliced(self, slicers):
        """A stepper over views of the stored moments, for shared-weight updates.

        `slicers` maps param index -> an index expression (e.g. numpy slice
        tuple) selecting the sub-block to update; params absent from the map
        are updated whole. The returned object shares this state's moments
        and step counter, so repeated sliced steps stay bias-corrected.
        """
        return _SlicedAdam(self, slicers)

    def step(self):
        self.step_count += 1
        lr = self.effective_lr()
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for i, p in enumerate(self.params):
            if p.grad is None:
                if self.allow_missing:
                    continue
                raise ContractError(f"parameter {p.name or i} has no grad")
            if not p.values.flags.writeable:
                raise FrozenParameterError(
                    f"parameter {p.name or i} belongs to a frozen supernet")
            kernels.adam_update(p.values, p.grad, self.m[i], self.v[i],
                                lr, self.beta1, self.beta2, self.eps,
                                self.weight_decay, bc1, bc2)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class _SlicedAdam:
    def __init__(self, state, slicers):
        self.state = state
        self.slicers = slicers

    def step(self, view_params):
        """Update `view_params` (tensors wrapping views of the stored params)."""
        st = self.state
        st.step_count += 1
        lr = st.effective_lr()
        bc1 = 1.0 - st.beta1 ** st.step_count
        bc2 = 1.0 - st.beta2 ** st.step_count
        for i, p in view_params.items():
            if p.grad is None:
                raise ContractError(f"sliced parameter {i} has no grad")
            if not p.values.flags.writeable:
                raise FrozenParameterError(
                    f"sliced parameter {i} belongs to a frozen supernet")
            sl = self.slicers.get(i, Ellipsis)
            kernels.adam_update(p.values, p.grad, st.m[i][sl], st.v[i][sl],
                                lr, st.beta1, st.beta2, st.eps,
                                st.weight_decay, bc1, bc2)
