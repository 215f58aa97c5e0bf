"""Network modules: linear/MLP stacks, layer/batch normalization, GRU cell.

Initialization scheme (recorded in checkpoint manifests): linear weights
uniform in (-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero, norm scales one,
norm offsets zero, GRU gate biases zero.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, cat, check_finite

INIT_SCHEME = "uniform_fan_in"

ACTIVATIONS = ("elu", "tanh", "sigmoid", "linear")


class Parameter(Tensor):
    __slots__ = ()

    def __init__(self, data):
        super().__init__(np.asarray(data, dtype=np.float32), requires_grad=True)


class Module:
    """Base class tracking parameters, buffers and submodules by attribute."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name, value):
        self._buffers[name] = np.asarray(value, dtype=np.float32)
        object.__setattr__(self, name, self._buffers[name])

    def _set_buffer(self, name, value):
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def named_buffers(self, prefix: str = ""):
        for name, b in self._buffers.items():
            yield prefix + name, b
        for name, m in self._modules.items():
            yield from m.named_buffers(prefix + name + ".")

    def train(self, mode: bool = True):
        object.__setattr__(self, "training", mode)
        for m in self._modules.values():
            m.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict:
        state = {name: p.data for name, p in self.named_parameters()}
        for name, b in self.named_buffers():
            state[name] = b
        return state

    def load_state_dict(self, state: dict) -> None:
        own = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        expected = set(own) | set(buffers)
        if expected != set(state):
            missing = expected - set(state)
            extra = set(state) - expected
            raise KeyError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, p in own.items():
            value = np.asarray(state[name], dtype=np.float32)
            if value.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: {value.shape} vs {p.data.shape}")
            p.data = value.copy()
        for name in buffers:
            value = np.asarray(state[name], dtype=np.float32)
            if value.shape != buffers[name].shape:
                raise ValueError(f"shape mismatch for buffer {name}")
            self._assign_buffer(name, value.copy())

    def _assign_buffer(self, dotted: str, value: np.ndarray) -> None:
        module = self
        parts = dotted.split(".")
        for part in parts[:-1]:
            module = module._modules[part]
        module._set_buffer(parts[-1], value)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._list = []
        for m in modules:
            self.append(m)

    def append(self, module: Module):
        self._modules[str(len(self._list))] = module
        self._list.append(module)

    def __iter__(self):
        return iter(self._list)

    def __len__(self):
        return len(self._list)

    def __getitem__(self, i):
        return self._list[i]


def _activation(x: Tensor, kind: str) -> Tensor:
    if kind == "elu":
        return x.elu()
    if kind == "tanh":
        return x.tanh()
    if kind == "sigmoid":
        return x.sigmoid()
    if kind == "linear":
        return x
    raise ValueError(f"unknown activation {kind!r}")


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        super().__init__()
        bound = 1.0 / np.sqrt(in_features)
        self.weight = Parameter(rng.uniform(-bound, bound, size=(in_features, out_features)))
        self.bias = Parameter(np.zeros(out_features))

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise ValueError(f"input width {x.shape[-1]} != layer width {self.weight.shape[0]}")
        return x @ self.weight + self.bias


def _norm_forward(xd: np.ndarray, axis: int, eps: float):
    scale = 1.0 / xd.shape[axis]
    mu = xd.sum(axis=axis, keepdims=True) * scale
    centered = xd - mu
    var = (centered * centered).sum(axis=axis, keepdims=True) * scale
    inv = (var + eps) ** -0.5
    return centered * inv, inv


def _norm_input_grad(g_scaled: np.ndarray, xhat: np.ndarray, inv: np.ndarray,
                     axis: int) -> np.ndarray:
    # d/dx of xhat = (x - mean) / sqrt(var + eps), biased variance
    scale = 1.0 / g_scaled.shape[axis]
    m1 = g_scaled.sum(axis=axis, keepdims=True) * scale
    m2 = (g_scaled * xhat).sum(axis=axis, keepdims=True) * scale
    return inv * (g_scaled - m1 - xhat * m2)


def _affine_norm(x: Tensor, scale: Tensor, offset: Tensor, axis: int, eps: float) -> Tensor:
    """Fused normalize-then-affine along `axis` with a single backward node."""
    xhat, inv = _norm_forward(x.data, axis, eps)
    out = xhat * scale.data + offset.data
    reduce_axes = tuple(i for i in range(out.ndim) if i != out.ndim - 1)

    def backward(g):
        if scale.requires_grad:
            scale._accum((g * xhat).sum(axis=reduce_axes))
        if offset.requires_grad:
            offset._accum(g.sum(axis=reduce_axes))
        if x.requires_grad:
            x._accum(_norm_input_grad(g * scale.data, xhat, inv, axis))

    return Tensor._result(out, (x, scale, offset), backward)


class LayerNorm(Module):
    """Normalize the last axis to zero mean / unit variance, then affine."""

    def __init__(self, dim: int, eps: float = 1e-6):
        super().__init__()
        self.scale = Parameter(np.ones(dim))
        self.offset = Parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return _affine_norm(x, self.scale, self.offset, axis=-1, eps=self.eps)


class BatchNorm(Module):
    """Batch normalization over axis 0 with running statistics for eval mode."""

    def __init__(self, dim: int, eps: float = 1e-5, momentum: float = 0.99):
        super().__init__()
        self.scale = Parameter(np.ones(dim))
        self.offset = Parameter(np.zeros(dim))
        self.eps = eps
        self.momentum = momentum
        self.register_buffer("running_mean", np.zeros(dim))
        self.register_buffer("running_var", np.ones(dim))

    def forward(self, x: Tensor) -> Tensor:
        if self.training:
            mu = x.data.mean(axis=0)
            var = x.data.var(axis=0)
            m = self.momentum
            self._set_buffer("running_mean", m * self.running_mean + (1.0 - m) * mu)
            self._set_buffer("running_var", m * self.running_var + (1.0 - m) * var)
            return _affine_norm(x, self.scale, self.offset, axis=0, eps=self.eps)
        normed = (x - self.running_mean) * (self.running_var + self.eps) ** -0.5
        return normed * self.scale + self.offset


class MLP(Module):
    """Stack of linear layers with optional pre-activation normalization.

    `norm` is applied before every activation (never after the output layer):
    one of None, "layer", "batch".
    """

    def __init__(
        self,
        sizes,
        rng: np.random.Generator,
        activation: str = "elu",
        norm: str | None = None,
        out_activation: str = "linear",
    ):
        super().__init__()
        if len(sizes) < 2:
            raise ValueError("MLP needs at least input and output sizes")
        if activation not in ACTIVATIONS or out_activation not in ACTIVATIONS:
            raise ValueError("unknown activation")
        self.layers = ModuleList(
            Linear(sizes[i], sizes[i + 1], rng) for i in range(len(sizes) - 1)
        )
        norms = []
        for width in sizes[1:-1]:
            if norm == "layer":
                norms.append(LayerNorm(width))
            elif norm == "batch":
                norms.append(BatchNorm(width))
            elif norm is not None:
                raise ValueError(f"unknown norm {norm!r}")
        self.norms = ModuleList(norms)
        self.activation = activation
        self.out_activation = out_activation

    def forward(self, x: Tensor) -> Tensor:
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last:
                if len(self.norms):
                    x = self.norms[i](x)
                x = _activation(x, self.activation)
        out = _activation(x, self.out_activation)
        check_finite(out.data, "MLP output")
        return out


class GRUCell(Module):
    """Gated recurrent unit: h' = (1 - u) * h + u * n.

    Update/reset gates are sigmoid, the candidate n is tanh. With
    `layer_norm=True` each gate pre-activation is layer-normalized before its
    nonlinearity.
    """

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator,
                 layer_norm: bool = False):
        super().__init__()
        self.hidden_size = hidden_size
        bx = 1.0 / np.sqrt(input_size)
        bh = 1.0 / np.sqrt(hidden_size)
        self.w_x = Parameter(rng.uniform(-bx, bx, size=(input_size, 3 * hidden_size)))
        self.w_h = Parameter(rng.uniform(-bh, bh, size=(hidden_size, 3 * hidden_size)))
        self.b_x = Parameter(np.zeros(3 * hidden_size))
        self.b_h = Parameter(np.zeros(3 * hidden_size))
        if layer_norm:
            self.ln_r = LayerNorm(hidden_size)
            self.ln_u = LayerNorm(hidden_size)
            self.ln_n = LayerNorm(hidden_size)
        self.layer_norm = layer_norm

    def forward(self, x: Tensor, h: Tensor) -> Tensor:
        gx = x @ self.w_x + self.b_x
        gh = h @ self.w_h + self.b_h
        out = _gru_gates(gx, gh, h, self)
        check_finite(out.data, "GRU output")
        return out


def _gru_gates(gx: Tensor, gh: Tensor, h: Tensor, cell: GRUCell) -> Tensor:
    """Fused gate block: slices the stacked (reset, update, candidate) gate
    pre-activations, applies the optional per-gate layer normalization, and
    combines h' = (1 - u) h + u n in one backward node."""
    k = cell.hidden_size
    ln = cell.layer_norm
    gxd, ghd, hd = gx.data, gh.data, h.data
    s_r = gxd[:, :k] + ghd[:, :k]
    s_u = gxd[:, k:2 * k] + ghd[:, k:2 * k]
    nx, nh = gxd[:, 2 * k:], ghd[:, 2 * k:]
    if ln:
        xhat_r, inv_r = _norm_forward(s_r, -1, cell.ln_r.eps)
        xhat_u, inv_u = _norm_forward(s_u, -1, cell.ln_u.eps)
        r = _sigmoid(xhat_r * cell.ln_r.scale.data + cell.ln_r.offset.data)
        u = _sigmoid(xhat_u * cell.ln_u.scale.data + cell.ln_u.offset.data)
    else:
        r = _sigmoid(s_r)
        u = _sigmoid(s_u)
    s_n = nx + r * nh
    if ln:
        xhat_n, inv_n = _norm_forward(s_n, -1, cell.ln_n.eps)
        n = np.tanh(xhat_n * cell.ln_n.scale.data + cell.ln_n.offset.data)
    else:
        n = np.tanh(s_n)
    out = (1.0 - u) * hd + u * n

    def backward(g):
        def ln_back(grad_out, norm, xhat, inv):
            if norm.scale.requires_grad:
                norm.scale._accum((grad_out * xhat).sum(axis=0))
            if norm.offset.requires_grad:
                norm.offset._accum(grad_out.sum(axis=0))
            return _norm_input_grad(grad_out * norm.scale.data, xhat, inv, -1)

        d_pre_n = g * u * (1.0 - n * n)
        ds_n = ln_back(d_pre_n, cell.ln_n, xhat_n, inv_n) if ln else d_pre_n
        d_r = ds_n * nh
        d_nh = ds_n * r
        d_pre_u = g * (n - hd) * u * (1.0 - u)
        ds_u = ln_back(d_pre_u, cell.ln_u, xhat_u, inv_u) if ln else d_pre_u
        d_pre_r = d_r * r * (1.0 - r)
        ds_r = ln_back(d_pre_r, cell.ln_r, xhat_r, inv_r) if ln else d_pre_r
        if gx.requires_grad:
            gx._accum(np.concatenate([ds_r, ds_u, ds_n], axis=-1))
        if gh.requires_grad:
            gh._accum(np.concatenate([ds_r, ds_u, d_nh], axis=-1))
        if h.requires_grad:
            h._accum(g * (1.0 - u))

    parents = (gx, gh, h)
    if ln:
        parents = parents + (cell.ln_r.scale, cell.ln_r.offset, cell.ln_u.scale,
                             cell.ln_u.offset, cell.ln_n.scale, cell.ln_n.offset)
    return Tensor._result(out, parents, backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def as_input(x, dtype=np.float32) -> Tensor:
    """Wrap raw observations/actions as a constant 2-D float tensor."""
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim == 1:
        arr = arr[None, :]
    return Tensor(arr)


def concat_inputs(*tensors: Tensor) -> Tensor:
    return cat(list(tensors), axis=-1)
