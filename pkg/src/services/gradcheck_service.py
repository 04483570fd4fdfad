"""Finite-difference verification of every differentiable op and a tiny full model."""

from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence

import numpy as np

from ..attention import (
    ChannelAttention,
    MultiHeadSelfAttention,
    SpatialAttention,
    TabAttention,
    TemporalAttention,
)
from ..core.errors import GradcheckFailureError
from ..core.logging import logger
from ..fusion import DaftFusion, InteractiveFusion, LateConcatHead, build_model
from ..models.schemas import MLPSpec, ModelConfig, TabAttentionConfig
from ..nn import MLP, Module, functional as F, init_params
from ..tensor import Tape, Tensor, ops
from .training_service import mse_loss


STEP = 1e-6
# Entries over tolerance are re-measured with these steps; a central window
# that straddles a ReLU or max kink rarely straddles it at every scale.
RETRY_STEPS = (1e-7, 1e-8)
OP_TOLERANCE = 1e-6
MODEL_TOLERANCE = 1e-5


@dataclass
class GradcheckCase:
    """A closure over its input tensors, checked with respect to each of them."""

    name: str
    inputs: List[Tensor]
    fn: Callable[[], Tensor]
    tolerance: float = OP_TOLERANCE


def relative_error(analytic, numeric) -> float:
    """Largest ``|a - n| / max(1, |n|)`` over corresponding entries."""
    analytic, numeric = np.atleast_1d(analytic), np.atleast_1d(numeric)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))


def _tensors(rng: np.random.Generator, *shapes) -> List[Tensor]:
    return [Tensor(rng.standard_normal(shape)) for shape in shapes]


def _module_case(name: str, module: Module, data: Sequence[Tensor], fn, seed: int,
                 tolerance: float = OP_TOLERANCE) -> GradcheckCase:
    init_params(module, seed)
    params = [p.value for p in module.parameters()]
    return GradcheckCase(name, list(data) + params, fn, tolerance)


def _perturb_biases(module: Module, rng: np.random.Generator) -> None:
    """Zero-initialized biases hide gradient paths; give them random values."""
    for param in module.parameters():
        if param.init == "zeros":
            param.value.data[...] = 0.5 * rng.standard_normal(param.shape)


def build_op_cases(seed: int = 0) -> List[GradcheckCase]:
    """One case per registered op, on small random instances."""
    rng = np.random.default_rng(seed)
    cases: List[GradcheckCase] = []

    a, b = _tensors(rng, (3, 4), (4,))
    cases.append(GradcheckCase("add", [a, b], lambda: ops.add(a, b)))
    a2, b2 = _tensors(rng, (2, 3), (2, 1))
    cases.append(GradcheckCase("sub", [a2, b2], lambda: ops.sub(a2, b2)))
    a3, b3 = _tensors(rng, (2, 3, 4), (3, 1))
    cases.append(GradcheckCase("mul", [a3, b3], lambda: ops.mul(a3, b3)))
    m1, m2 = _tensors(rng, (2, 3, 4), (4, 5))
    cases.append(GradcheckCase("matmul", [m1, m2], lambda: ops.matmul(m1, m2)))

    r1, = _tensors(rng, (2, 3, 4))
    cases.append(GradcheckCase("reduce_sum", [r1], lambda: ops.sum(r1, axes=(0, 2))))
    r2, = _tensors(rng, (2, 3, 4))
    cases.append(GradcheckCase("reduce_mean", [r2], lambda: ops.mean(r2, axes=1, keepdims=True)))
    r3, = _tensors(rng, (2, 3, 4))
    cases.append(GradcheckCase("reduce_max", [r3], lambda: ops.max(r3, axes=(1, 2))))

    x1, = _tensors(rng, (3, 5))
    cases.append(GradcheckCase("relu", [x1], lambda: ops.relu(x1)))
    x2, = _tensors(rng, (3, 5))
    cases.append(GradcheckCase("sigmoid", [x2], lambda: ops.sigmoid(x2)))
    x3, = _tensors(rng, (2, 3, 5))
    cases.append(GradcheckCase("softmax", [x3], lambda: ops.softmax_lastaxis(x3)))

    l1, = _tensors(rng, (2, 3, 4))
    cases.append(GradcheckCase("reshape", [l1], lambda: ops.reshape(l1, (6, 4))))
    l2, = _tensors(rng, (2, 3, 4))
    cases.append(GradcheckCase("permute", [l2], lambda: ops.permute(l2, (2, 0, 1))))
    c1, c2 = _tensors(rng, (2, 3), (2, 2))
    cases.append(GradcheckCase("concat", [c1, c2], lambda: ops.concat([c1, c2], axis=1)))
    s1, = _tensors(rng, (4, 5))
    cases.append(GradcheckCase("slice", [s1], lambda: ops.slice(s1, [(1, 3), None])))
    bt, = _tensors(rng, (1, 3, 1))
    cases.append(GradcheckCase("broadcast_to", [bt], lambda: ops.broadcast_to(bt, (2, 3, 4))))

    lx, lw, lb = _tensors(rng, (2, 3, 4), (5, 4), (5,))
    cases.append(GradcheckCase("linear", [lx, lw, lb], lambda: F.linear(lx, lw, lb)))
    cx, cw, cb = _tensors(rng, (2, 2, 5, 5), (3, 2, 3, 3), (3,))
    cases.append(GradcheckCase("conv2d", [cx, cw, cb], lambda: F.conv2d(cx, cw, cb, stride=2, pad=1)))
    vx, vw, vb = _tensors(rng, (2, 2, 3, 4, 4), (2, 2, 3, 3, 3), (2,))
    cases.append(GradcheckCase("conv3d", [vx, vw, vb], lambda: F.conv3d(vx, vw, vb, stride=(1, 2, 2), pad=1)))

    bx, bg, bbeta = _tensors(rng, (4, 3, 2, 2), (3,), (3,))
    train_mean, train_var = np.zeros(3), np.ones(3)
    cases.append(GradcheckCase(
        "batchnorm_train", [bx, bg, bbeta],
        lambda: F.batchnorm(bx, bg, bbeta, train_mean, train_var, training=True),
    ))
    ex, eg, ebeta = _tensors(rng, (4, 3, 2, 2), (3,), (3,))
    eval_mean, eval_var = rng.standard_normal(3), rng.uniform(0.5, 2.0, 3)
    cases.append(GradcheckCase(
        "batchnorm_eval", [ex, eg, ebeta],
        lambda: F.batchnorm(ex, eg, ebeta, eval_mean, eval_var, training=False),
    ))

    pred, target = _tensors(rng, (6,), (6,))
    cases.append(GradcheckCase("mse_loss", [pred, target], lambda: mse_loss(pred, target)))

    mlp = MLP(MLPSpec(in_dim=4, hidden_dim=3, out_dim=2))
    mx, = _tensors(rng, (5, 4))
    cases.append(_module_case("mlp", mlp, [mx], lambda: mlp(mx), seed))

    cfg = TabAttentionConfig(C=4, T=3, H=4, W=4, D=3, z=2, heads=2, d=3, sam_kernel=3)
    fx, tab = _tensors(rng, (2, 3, 4, 4, 4), (2, 3))

    cam = ChannelAttention(cfg)
    cases.append(_module_case("cam", cam, [fx, tab], lambda: cam(fx, tab), seed))
    sam = SpatialAttention(cfg)
    cases.append(_module_case("sam", sam, [fx, tab], lambda: sam(fx, tab), seed))
    tam = TemporalAttention(cfg)
    cases.append(_module_case("tam", tam, [fx, tab], lambda: tam(fx, tab), seed))
    mhsa = MultiHeadSelfAttention(3, 3, heads=2, d=3)
    seq, = _tensors(rng, (2, 3, 3))
    cases.append(_module_case("mhsa", mhsa, [seq], lambda: mhsa(seq), seed))
    block = TabAttention(cfg)
    cases.append(_module_case("tabattention", block, [fx, tab], lambda: block(fx, tab), seed))

    fmap, ftab = _tensors(rng, (2, 4, 2, 3, 3), (2, 3))
    interactive = InteractiveFusion(4, 3)
    cases.append(_module_case("interactive", interactive, [fmap, ftab], lambda: interactive(fmap, ftab), seed))
    daft = DaftFusion(4, 3)
    cases.append(_module_case("daft", daft, [fmap, ftab], lambda: daft(fmap, ftab), seed))
    pooled, ptab = _tensors(rng, (3, 5), (3, 2))
    head = LateConcatHead(5, 2)
    cases.append(_module_case("late_concat", head, [pooled, ptab], lambda: head(pooled, ptab), seed))

    for module in (mlp, cam, sam, tam, mhsa, block, interactive, daft, head):
        _perturb_biases(module, rng)
    return cases


def tiny_model_config() -> ModelConfig:
    """One stage of width 4 on 4 frames; attention sees 6x6 maps with D=3."""
    return ModelConfig(
        kind="tabattention", stages=1, widths=(4,), z=2, heads=2, d=4, sam_kernel=3,
        frames=4, input_size=(12, 12), tab_dim=3,
    )


def build_model_case(seed: int = 0) -> GradcheckCase:
    rng = np.random.default_rng(seed)
    model = build_model(tiny_model_config(), seed=seed)
    _perturb_biases(model, rng)
    video = Tensor(rng.uniform(0.0, 1.0, (2, 1, 4, 12, 12)))
    tab = Tensor(rng.standard_normal((2, 3)))
    params = [p.value for p in model.parameters()]
    return GradcheckCase("full_model", [video, tab] + params, lambda: model(video, tab), MODEL_TOLERANCE)


class GradcheckService:
    """Compare tape gradients with central differences."""

    def check(self, case: GradcheckCase, seed: int = 0) -> float:
        """Worst elementwise relative error over every entry of every input of ``case``."""
        rng = np.random.default_rng(seed)
        with Tape() as tape:
            tape.watch_all(case.inputs)
            out = case.fn()
            weights = rng.standard_normal(out.shape)
            loss = ops.sum(out * Tensor(weights))
            grads = tape.backward(loss)
        analytic = [grads.of(t).reshape(-1).copy() for t in case.inputs]

        def central(flat: np.ndarray, index: int, step: float) -> float:
            original = flat[index]
            flat[index] = original + step
            plus = float((case.fn().data * weights).sum())
            flat[index] = original - step
            minus = float((case.fn().data * weights).sum())
            flat[index] = original
            return (plus - minus) / (2.0 * step)

        worst = 0.0
        for tensor, grad in zip(case.inputs, analytic):
            flat = tensor.data.reshape(-1)
            for index in range(flat.size):
                error = relative_error(grad[index], central(flat, index, STEP))
                for step in RETRY_STEPS:
                    if error <= case.tolerance:
                        break
                    error = min(error, relative_error(grad[index], central(flat, index, step)))
                worst = max(worst, error)
        return worst

    def run(self, seed: int = 0, include_model: bool = True) -> Dict[str, float]:
        """Worst error per registered op; raises when any exceeds its tolerance."""
        cases = build_op_cases(seed)
        if include_model:
            cases.append(build_model_case(seed))
        report: Dict[str, float] = {}
        failures: Dict[str, float] = {}
        for case in cases:
            error = self.check(case, seed)
            report[case.name] = error
            logger.info("Gradcheck", extra={"op": case.name, "worst_error": error})
            if not error <= case.tolerance:
                failures[case.name] = error
        if failures:
            raise GradcheckFailureError(failures, max(OP_TOLERANCE, MODEL_TOLERANCE))
        return report

    def registered_ops(self, include_model: bool = True) -> List[str]:
        names = [case.name for case in build_op_cases()]
        return names + (["full_model"] if include_model else [])


gradcheck_service = GradcheckService()
