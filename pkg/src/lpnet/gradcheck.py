"""Finite-difference verification of reverse-mode gradients.

Runs in float64 only. The checked function must be deterministic; this is
verified by evaluating it twice before any differencing.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .tensor import GradTape

DEFAULT_EPS = 1e-5
DEFAULT_TOL = 1e-4

# relative error denominator floor; grads below this scale are compared
# absolutely, which keeps finite-difference noise on true zeros from
# registering as failures
_SCALE_FLOOR = 1e-3


@dataclass
class ParamCheck:
    name: str
    checked: int
    max_rel_err: float
    worst_index: int
    worst_analytic: float
    worst_numeric: float


@dataclass
class GradCheckReport:
    passed: bool
    tol: float
    eps: float
    max_rel_err: float
    params: list = field(default_factory=list)

    def summary(self):
        lines = [f"gradcheck: {'PASS' if self.passed else 'FAIL'} "
                 f"(max rel err {self.max_rel_err:.3e}, tol {self.tol:.1e}, eps {self.eps:.1e})"]
        for p in self.params:
            lines.append(
                f"  {p.name}: checked {p.checked} elems, max rel err {p.max_rel_err:.3e} "
                f"at flat index {p.worst_index} (autodiff {p.worst_analytic:.6e}, "
                f"fd {p.worst_numeric:.6e})")
        return "\n".join(lines)


def gradcheck(f, params, eps=DEFAULT_EPS, tol=DEFAULT_TOL,
              max_per_param=None, sample_seed=0, names=None):
    """Compare autodiff gradients of the scalar f(params) against central
    finite differences.

    params is a list of Tensors with requires_grad set; f is called with the
    list and must return a scalar tensor. When max_per_param is given, only
    that many elements per parameter are probed, chosen by a seeded draw
    (full coverage otherwise).
    """
    v1 = f(params).item()
    v2 = f(params).item()
    if v1 != v2:
        raise NumericalError("gradcheck", f"function is not deterministic: {v1!r} != {v2!r}")

    with GradTape() as tape:
        loss = f(params)
        tape.backward(loss)
    analytic = []
    for p in params:
        g = tape.grad(p)
        analytic.append(np.zeros_like(p.data) if g is None else g)

    picker = np.random.Generator(np.random.PCG64(sample_seed))
    report = GradCheckReport(passed=True, tol=tol, eps=eps, max_rel_err=0.0)
    for k, p in enumerate(params):
        n = p.data.size
        if max_per_param is not None and n > max_per_param:
            idx = np.sort(picker.choice(n, size=max_per_param, replace=False))
        else:
            idx = np.arange(n)
        worst = (0.0, -1, 0.0, 0.0)
        for i in idx:
            where = np.unravel_index(i, p.data.shape)
            keep = p.data[where]
            p.data[where] = keep + eps
            up = f(params).item()
            p.data[where] = keep - eps
            down = f(params).item()
            p.data[where] = keep
            fd = (up - down) / (2.0 * eps)
            ad = float(analytic[k].ravel()[i])
            rel = abs(ad - fd) / max(abs(ad), abs(fd), _SCALE_FLOOR)
            if rel > worst[0]:
                worst = (rel, int(i), ad, fd)
        name = names[k] if names else f"param{k}"
        report.params.append(ParamCheck(name, len(idx), worst[0], worst[1], worst[2], worst[3]))
        report.max_rel_err = max(report.max_rel_err, worst[0])
    report.passed = report.max_rel_err < tol
    return report
