"""Central finite-difference gradient oracle.

The oracle is independent of the tape: it only re-evaluates the forward
function at perturbed inputs, so it can be trusted to vet the analytic
gradients of anything differentiable built on :mod:`eegcv.autodiff`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import Tape, Tensor
from .errors import ContractError, OracleError

Array = np.ndarray

_REL_FLOOR = 1e-6  # denominator floor so near-zero gradients compare absolutely


@dataclass(frozen=True)
class GradCheckReport:
    analytic: Array
    numeric: Array
    rel_err: Array
    max_rel_err: float
    step: float
    tol: float
    passed: bool


def _eval(f: Callable[[Tensor], Tensor], data: Array) -> float:
    out = f(Tensor(np.array(data, copy=True)))
    if not isinstance(out, Tensor) or out.shape != ():
        raise ContractError("grad_check: f must return a scalar tensor")
    return out.item()


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor,
               step: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare the tape gradient of ``f`` at ``x`` against central differences.

    ``f`` must be scalar-valued and deterministic; two base evaluations that
    disagree bit-for-bit raise :class:`OracleError`.
    """
    if not 0.0 < step <= 1e-2:
        raise ContractError(f"grad_check: step must be in (0, 1e-2], got {step}")
    base = _eval(f, x.data)
    again = _eval(f, x.data)
    if base != again:
        raise OracleError("grad_check: f is not deterministic (two evaluations differ)")

    leaf = Tensor(np.array(x.data, copy=True), requires_grad=True)
    with Tape() as tape:
        loss = f(leaf)
        if loss.shape != ():
            raise ContractError("grad_check: f must return a scalar tensor")
    tape.backward(loss)
    analytic = np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad

    flat = np.array(x.data, copy=True).ravel()
    numeric = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = _eval(f, flat.reshape(x.shape))
        flat[i] = orig - step
        fm = _eval(f, flat.reshape(x.shape))
        flat[i] = orig
        numeric[i] = (fp - fm) / (2.0 * step)
    numeric = numeric.reshape(x.shape)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), _REL_FLOOR)
    rel = np.abs(analytic - numeric) / denom
    max_rel = float(rel.max()) if rel.size else 0.0
    return GradCheckReport(analytic=analytic, numeric=numeric, rel_err=rel,
                           max_rel_err=max_rel, step=step, tol=tol,
                           passed=bool(max_rel <= tol))
