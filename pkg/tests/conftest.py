import numpy as np
import pytest

FD_EPS = 1e-5


def central_difference(f, arr: np.ndarray, idx) -> float:
    """d f / d arr[idx] by central differences; restores ``arr`` afterwards."""
    old = arr[idx]
    arr[idx] = old + FD_EPS
    fp = f()
    arr[idx] = old - FD_EPS
    fm = f()
    arr[idx] = old
    return (fp - fm) / (2 * FD_EPS)


def rel_error(a: float, b: float, floor: float = 1e-6) -> float:
    """Relative error with an absolute floor on the denominator."""
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_grads(f, params: dict, grads: dict, per_param: int = 8, rng=None, rtol=1e-4, atol=1e-6):
    """Compare analytic ``grads`` to finite differences on a sample of entries of each param.

    An entry passes if relative error <= rtol or absolute error <= atol.
    Returns the worst relative error among failing-scale entries.
    """
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    bad = []
    for name, arr in params.items():
        flat = list(np.ndindex(arr.shape))
        pick = rng.choice(len(flat), size=min(per_param, len(flat)), replace=False)
        for j in pick:
            idx = flat[j]
            fd = central_difference(f, arr, idx)
            an = float(grads[name][idx])
            err = rel_error(fd, an)
            if abs(fd - an) > atol:
                worst = max(worst, err)
                if err > rtol:
                    bad.append((name, idx, fd, an, err))
    assert not bad, f"gradient mismatches: {bad[:5]}"
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance verdicts, filled in by test_acceptance.py and printed after the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (ok, detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
