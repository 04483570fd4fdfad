"""Parameter registry."""

from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..tensor import Tensor


class Param:
    """Named parameter or buffer.

    The shape is fixed at construction; optimizers and checkpoint loading
    write into ``value.data`` in place.
    """

    __slots__ = ("name", "value", "grad_tracked", "init", "fan_in")

    def __init__(
        self,
        shape: Sequence[int],
        init: str = "zeros",
        fan_in: int = 1,
        grad_tracked: bool = True,
    ):
        self.name = ""
        fill = np.ones if init == "ones" else np.zeros
        self.value = Tensor(fill(tuple(shape)))
        self.grad_tracked = grad_tracked
        self.init = init
        self.fan_in = fan_in

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Param({self.name or '?'}, shape={self.shape})"


class Module:
    """Container that registers parameters and submodules by attribute name."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Param):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        else:
            self._params.pop(name, None)
            self._modules.pop(name, None)
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "", include_buffers: bool = False) -> Iterator[Tuple[str, Param]]:
        """Yield ``(dotted path, param)`` in registration order."""
        for name, param in self._params.items():
            if not param.grad_tracked and not include_buffers:
                continue
            path = f"{prefix}{name}"
            param.name = path
            yield path, param
        for name, module in self._modules.items():
            yield from module.named_parameters(f"{prefix}{name}.", include_buffers)

    def parameters(self, include_buffers: bool = False) -> List[Param]:
        return [p for _, p in self.named_parameters(include_buffers=include_buffers)]

    def state(self) -> Dict[str, Param]:
        """Every parameter and buffer keyed by path."""
        return dict(self.named_parameters(include_buffers=True))

    def parameter_count(self, prefix: Optional[str] = None) -> int:
        return int(sum(
            p.value.size for name, p in self.named_parameters()
            if prefix is None or name.startswith(prefix)
        ))

    def train(self, mode: bool = True) -> "Module":
        object.__setattr__(self, "training", mode)
        for module in self._modules.values():
            module.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class ModuleList(Module):
    """Indexed list of submodules, registered as ``"0"``, ``"1"``, ..."""

    def __init__(self, modules: Sequence[Module] = ()):
        super().__init__()
        object.__setattr__(self, "_items", [])
        for module in modules:
            self.append(module)

    def append(self, module: Module) -> None:
        self._modules[str(len(self._items))] = module
        self._items.append(module)

    def __getitem__(self, index: int) -> Module:
        return self._items[index]

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)
