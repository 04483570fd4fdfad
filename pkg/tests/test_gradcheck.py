"""
Finite-difference gradient verification tests.

To run: pytest tests/test_gradcheck.py
"""

import numpy as np
import pytest

from src.core.errors import GradcheckFailureError
from src.services import gradcheck_service as gradcheck_module
from src.services.gradcheck_service import (
    GradcheckCase,
    build_model_case,
    build_op_cases,
    gradcheck_service,
    relative_error,
)
from src.tensor import Tensor, as_tensor, emit, ops


def _square_with_bad_last_entry(x):
    """x * x whose backward is off by 5 in the last entry only."""
    x = as_tensor(x)
    data = x.data

    def backward(g):
        grad = 2.0 * g * data
        grad.reshape(-1)[-1] += 5.0
        return (grad,)

    return emit("square", (x,), data * data, backward)


def test_relative_error_floor():
    """Small gradients are compared in absolute terms."""
    assert relative_error(np.array([1e-9]), np.array([0.0])) == pytest.approx(1e-9)
    assert relative_error(np.array([2.0, 0.0]), np.array([2.0, 0.0])) == 0.0
    assert relative_error(np.array([10.0]), np.array([-10.0])) == pytest.approx(2.0)


def test_relative_error_is_elementwise():
    """One bad entry is not diluted by many good ones."""
    analytic = np.ones(1000)
    numeric = analytic.copy()
    numeric[-1] = 1.5
    assert relative_error(analytic, numeric) == pytest.approx(1.0 / 3.0)
    assert relative_error(0.5, 0.25) == pytest.approx(0.25)


def test_every_op_is_registered_once():
    """Case names are unique and include the attention modules and fusion baselines."""
    names = gradcheck_service.registered_ops()
    assert len(names) == len(set(names))
    for required in ("matmul", "conv3d", "batchnorm_train", "softmax", "cam", "sam", "tam",
                     "mhsa", "tabattention", "daft", "interactive", "late_concat", "full_model"):
        assert required in names


def test_all_ops_pass():
    """Analytic gradients agree with central differences for every op."""
    report = gradcheck_service.run(seed=0, include_model=False)
    assert set(report) == {case.name for case in build_op_cases()}
    assert max(report.values()) <= 1e-6


@pytest.mark.slow
def test_full_model_passes():
    """The tiny end-to-end model agrees with finite differences."""
    case = build_model_case(seed=0)
    assert gradcheck_service.check(case, seed=0) <= case.tolerance


def test_wrong_gradient_is_detected(monkeypatch):
    """Flipping the sign of the sigmoid derivative fails the check."""
    monkeypatch.setattr(ops, "sigmoid_grad", lambda out, g: -g * out * (1.0 - out))
    with pytest.raises(GradcheckFailureError) as excinfo:
        gradcheck_service.run(seed=0, include_model=False)
    failures = excinfo.value.details["failures"]
    assert "sigmoid" in failures
    assert "add" not in failures
    assert excinfo.value.exit_code == 3


@pytest.mark.parametrize("seed", range(10))
def test_single_wrong_entry_is_detected(seed):
    """Every entry is perturbed, so a derivative wrong in one place cannot slip through."""
    x = Tensor(np.random.default_rng(seed).uniform(-2.0, 2.0, (4, 4, 4)))
    case = GradcheckCase("square", [x], lambda: _square_with_bad_last_entry(x))
    assert gradcheck_service.check(case, seed=seed) > case.tolerance


def test_single_wrong_entry_fails_the_run(monkeypatch):
    """The run reports the faulty op and raises."""
    x = Tensor(np.random.default_rng(0).uniform(-2.0, 2.0, (4, 4, 4)))
    cases = [GradcheckCase("square", [x], lambda: _square_with_bad_last_entry(x))]
    monkeypatch.setattr(gradcheck_module, "build_op_cases", lambda seed=0: cases)
    with pytest.raises(GradcheckFailureError) as excinfo:
        gradcheck_service.run(seed=0, include_model=False)
    assert list(excinfo.value.details["failures"]) == ["square"]
