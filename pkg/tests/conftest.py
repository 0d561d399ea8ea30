import numpy as np
import pytest

from flipdistill.tensor import Tensor, backward

FD_STEP = 1e-5
FD_TOL = 1e-4


def numeric_grad(f, x, step=FD_STEP):
    """Central finite differences of scalar f at array x (copied, not mutated)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + step
        up = f(x)
        x[idx] = old - step
        down = f(x)
        x[idx] = old
        g[idx] = (up - down) / (2 * step)
    return g


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return float(np.abs(a - b).max() / scale)


def analytic_grads(build, arrays):
    """Gradients of scalar build(*tensors) w.r.t. each input array."""
    ts = [Tensor(a, requires_grad=True) for a in arrays]
    out = build(*ts)
    backward(out)
    return [t.grad if t.grad is not None else np.zeros(t.shape) for t in ts]


def check_grads(build, arrays, tol=FD_TOL):
    """Worst relative error over all inputs between analytic and FD gradients."""
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    got = analytic_grads(build, arrays)
    worst = 0.0
    for i, a in enumerate(arrays):
        def f(v, i=i):
            args = [Tensor(v if j == i else arrays[j]) for j in range(len(arrays))]
            return build(*args).item()

        worst = max(worst, rel_err(got[i], numeric_grad(f, a)))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ------------------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """Remember a criterion's outcome for the end-of-run summary, then print it."""
    ACCEPTANCE[number] = (bool(ok), detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
