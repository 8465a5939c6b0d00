import numpy as np
import pytest

from predformer.checks import run_gradchecks
from predformer.gradcheck import NondeterministicFunctionError, grad_check, relative_error
from predformer.tensor import Tensor, custom_op, mul, sum_all


def test_relative_error_basic():
    assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert relative_error(np.array([1.0]), np.array([1.1])) == pytest.approx(0.1 / 1.1)


def test_relative_error_floor_ignores_noise_on_zero_entries():
    # exact zero vs finite-difference noise next to an O(1) entry
    assert relative_error(np.array([0.0, 1.0]), np.array([1e-11, 1.0])) < 1e-6


def test_detects_wrong_backward():
    x = Tensor(np.linspace(-1, 1, 5), requires_grad=True)

    def f(a):
        # forward a^2, backward claims 3a
        y = custom_op(a.data ** 2, [a], lambda g: (g * 3 * a.data,))
        return sum_all(y)

    rep = grad_check(f, x, name="bad")
    assert not rep.passed
    assert rep.line().startswith("FAIL")


def test_passes_correct_gradient_and_counts_entries():
    x = Tensor(np.linspace(-1, 1, 5), requires_grad=True)
    rep = grad_check(lambda a: sum_all(mul(a, a)), x, name="sq")
    assert rep.passed and rep.n_checked == 5


def test_subsampling_limits_entries():
    x = Tensor(np.ones((10, 10)), requires_grad=True)
    rep = grad_check(lambda a: sum_all(mul(a, a)), x, max_entries=7)
    assert rep.n_checked == 7 and rep.passed


def test_nondeterministic_function_rejected():
    r = np.random.default_rng(0)
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(NondeterministicFunctionError):
        grad_check(lambda a: sum_all(mul(a, float(r.random()))), x)


def test_full_suite_passes_at_default_tolerance(backend):
    reports = run_gradchecks()
    bad = [r.line() for r in reports if not r.passed]
    assert not bad, bad
    names = {r.name for r in reports}
    assert {"softmax", "layer_norm", "silu", "mhsa", "swiglu_ffn", "gtb_forward", "end_to_end"} <= names


def test_tolerance_below_noise_floor_fails():
    reports = run_gradchecks(tol=1e-12)
    assert not all(r.passed for r in reports)
