"""Network building blocks and the structure-string parser.

Every layer maps a whole time sequence [T, B, ...] to a sequence, which
is equivalent to stepping layers in lockstep because synaptic layers are
stateless; only spiking-neuron layers couple time-steps, and they run
their own in-order loop. Parameters are shared across all time-steps, so
gradients accumulate over the full sequence.

Structure strings follow the grammar: atoms `c<out>k<k>s<s>`, `BN`,
`PLIF`, `LIF<tau>`, `MPk<k>s<s>`, `APk<k>s<s>`, `DP`, `FC<out>`,
joined by `-`, with repetition `{...}*<n>`.
"""

from __future__ import annotations

import re
import warnings

import numpy as np

from . import tensor as tk
from .errors import ConfigError, ContractViolation, ShapeError
from .neuron import NeuronLayer, surrogate_grad, clamp_k_prime


class Param:
    """A learnable array with its accumulated gradient."""

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad.fill(0.0)


class Context:
    """Per-forward-pass flags and randomness shared by all layers."""

    def __init__(self, training: bool = False, soft: bool = False,
                 rng: np.random.Generator | None = None, tie_policy: str = "first"):
        self.training = training
        self.soft = soft
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.tie_policy = tie_policy


class Layer:
    def params(self) -> list[Param]:
        return []

    def buffers(self) -> dict[str, np.ndarray]:
        """Non-trainable state that must survive checkpointing."""
        return {}

    def forward(self, x: np.ndarray, ctx: Context) -> np.ndarray:
        raise NotImplementedError

    def backward(self, g: np.ndarray, ctx: Context) -> np.ndarray:
        raise NotImplementedError


def _fold(x):
    """Merge time and batch axes: [T,B,...] -> [T*B,...]."""
    return x.reshape((-1,) + x.shape[2:])


def _unfold(x, t, b):
    return x.reshape((t, b) + x.shape[1:])


class Conv2d(Layer):
    def __init__(self, in_ch: int, out_ch: int, k: int, stride: int, padding: int,
                 rng: np.random.Generator):
        self.k, self.stride, self.padding = k, stride, padding
        fan_in = in_ch * k * k
        w = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(out_ch, in_ch, k, k))
        self.weight = Param("weight", w)
        self._x = None

    def params(self):
        return [self.weight]

    def forward(self, x, ctx):
        t, b = x.shape[:2]
        xf = _fold(x)
        self._x = xf
        y = tk.conv2d(xf, self.weight.value, self.stride, self.padding)
        return _unfold(y, t, b)

    def backward(self, g, ctx):
        t, b = g.shape[:2]
        gi, gk = tk.conv2d_grads(self._x, self.weight.value, _fold(g), self.stride, self.padding)
        self.weight.grad += gk
        return _unfold(gi, t, b)


class Linear(Layer):
    """Fully connected synapse X = W I (no bias, matching the BPTT equations)."""

    def __init__(self, in_f: int, out_f: int, rng: np.random.Generator):
        w = rng.normal(0.0, np.sqrt(1.0 / in_f), size=(out_f, in_f))
        self.weight = Param("weight", w)
        self._x = None

    def params(self):
        return [self.weight]

    def forward(self, x, ctx):
        self._x = x
        return x @ self.weight.value.T

    def backward(self, g, ctx):
        self.weight.grad += np.einsum("tbo,tbi->oi", g, self._x)
        return g @ self.weight.value


class Flatten(Layer):
    def __init__(self):
        self._shape = None

    def forward(self, x, ctx):
        self._shape = x.shape
        return x.reshape(x.shape[0], x.shape[1], -1)

    def backward(self, g, ctx):
        return g.reshape(self._shape)


class BatchNorm(Layer):
    """Channel-wise batch normalization with time folded into the batch.

    Statistics are shared across time-steps, mirroring parameter sharing
    of the synaptic layers.
    """

    def __init__(self, ch: int, eps: float = 1e-5, momentum: float = 0.1):
        self.eps, self.momentum = eps, momentum
        self.gamma = Param("gamma", np.ones(ch))
        self.beta = Param("beta", np.zeros(ch))
        self.running_mean = np.zeros(ch)
        self.running_var = np.ones(ch)
        self.num_batches = np.zeros(1)
        self._cache = None

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var,
                "num_batches": self.num_batches}

    def forward(self, x, ctx):
        t, b = x.shape[:2]
        xf = _fold(x)  # [N, C, H, W]
        axes = (0, 2, 3) if xf.ndim == 4 else (0,)
        shape = (1, -1, 1, 1) if xf.ndim == 4 else (1, -1)
        if ctx.training:
            mean = xf.mean(axis=axes)
            var = xf.var(axis=axes)
            self.running_mean += self.momentum * (mean - self.running_mean)
            self.running_var += self.momentum * (var - self.running_var)
            self.num_batches += 1
        else:
            if self.num_batches[0] == 0:
                warnings.warn("BatchNorm evaluated before any training statistics; "
                              "using identity normalization")
                mean = np.zeros_like(self.running_mean)
                var = np.ones_like(self.running_var)
            else:
                mean, var = self.running_mean, self.running_var
        invstd = 1.0 / np.sqrt(var + self.eps)
        xhat = (xf - mean.reshape(shape)) * invstd.reshape(shape)
        self._cache = (xhat, invstd, axes, shape, ctx.training)
        y = self.gamma.value.reshape(shape) * xhat + self.beta.value.reshape(shape)
        return _unfold(y, t, b)

    def backward(self, g, ctx):
        t, b = g.shape[:2]
        gf = _fold(g)
        xhat, invstd, axes, shape, trained = self._cache
        self.gamma.grad += (gf * xhat).sum(axis=axes)
        self.beta.grad += gf.sum(axis=axes)
        dxhat = gf * self.gamma.value.reshape(shape)
        if trained:
            n = xhat.size // xhat.shape[1]
            dx = (invstd.reshape(shape) / n) * (
                n * dxhat
                - dxhat.sum(axis=axes, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True)
            )
        else:
            dx = dxhat * invstd.reshape(shape)
        return _unfold(dx, t, b)


class SpikeNeuron(Layer):
    """A layer of LIF/PLIF neurons with backpropagation through time.

    The backward pass maintains dL/dH_t by the reverse recursion and, in
    PLIF mode, evaluates the dH_t/da recursion forward in time against
    the cached trajectory before contracting it with dL/dH_t.
    """

    def __init__(self, mode: str = "plif", tau: float = 2.0, tau0: float = 2.0,
                 v_th: float = 1.0, v_reset: float = 0.0, detach_reset: bool = True):
        from .neuron import a_from_tau
        self.neuron = NeuronLayer(mode=mode, tau=tau,
                                  a=a_from_tau(tau0) if mode == "plif" else 0.0,
                                  v_th=v_th, v_reset=v_reset, detach_reset=detach_reset)
        self.a_param = Param("a", np.array(self.neuron.a)) if mode == "plif" else None
        self._cache = None

    @property
    def mode(self):
        return self.neuron.mode

    @property
    def tau(self) -> float:
        """Current effective membrane time constant (inf if k underflowed)."""
        k = self.neuron.k
        return 1.0 / k if k > 0.0 else float("inf")

    def params(self):
        return [self.a_param] if self.a_param is not None else []

    def forward(self, x, ctx):
        if self.a_param is not None:
            self.neuron.a = float(self.a_param.value)
        self.neuron.reset_state()
        t_steps = x.shape[0]
        s_seq = np.empty_like(x)
        h_seq = np.empty_like(x)
        v_seq = np.empty_like(x)
        for t in range(t_steps):
            s, h, v = self.neuron.step(x[t], soft=ctx.soft)
            s_seq[t], h_seq[t], v_seq[t] = s, h, v
        self._cache = (x, h_seq, s_seq, v_seq)
        self.neuron.reset_state()
        return s_seq

    def backward(self, g, ctx):
        x, h_seq, s_seq, v_seq = self._cache
        nl = self.neuron
        k = nl.k
        t_steps = x.shape[0]
        sg = surrogate_grad(h_seq - nl.v_th)  # dS_t/dH_t
        if nl.detach_reset and not ctx.soft:
            dvdh = 1.0 - s_seq
        else:
            dvdh = 1.0 - s_seq + (nl.v_reset - h_seq) * sg
        g_h = np.empty_like(g)  # dL/dH_t
        carry = np.zeros_like(g[0])
        for t in range(t_steps - 1, -1, -1):
            g_h[t] = g[t] * sg[t] + carry
            # dH_t/dH_{t-1} = (1-k) * dV_{t-1}/dH_{t-1}
            if t > 0:
                carry = g_h[t] * (1.0 - k) * dvdh[t - 1]
        downstream = g_h * k
        if self.a_param is not None:
            kp = clamp_k_prime(float(self.a_param.value))
            v_prev = np.concatenate([np.full_like(v_seq[:1], nl.v_reset), v_seq[:-1]])
            drive = (x - (v_prev - nl.v_reset)) * kp  # direct dH_t/da term
            # The recursion gives the total dH_t/da within the layer, so it
            # contracts with the local dL_t/dH_t (= upstream * dS_t/dH_t);
            # pairing it with the recursive dL/dH_t would double-count the
            # membrane chain.
            dhda = np.zeros_like(x[0])
            grad_a = 0.0
            for t in range(t_steps):
                dhda = drive[t] + ((1.0 - k) * dvdh[t - 1] * dhda if t > 0 else 0.0)
                grad_a += float(np.sum(g[t] * sg[t] * dhda))
            self.a_param.grad += grad_a
        return downstream


class SpikeMaxPool(Layer):
    """Winner-take-all pooling on spike maps.

    Forward equals the logical OR over each window for binary input; the
    cached winner index routes the whole window gradient in backward.
    Ties (several simultaneous firers) go to the lowest index by default
    or to a seeded random firer under the "random" policy.
    """

    def __init__(self, k: int, stride: int):
        self.k, self.stride = k, stride
        self._cache = None

    def forward(self, x, ctx):
        t, b = x.shape[:2]
        xf = _fold(x)
        if not ctx.soft and not np.all((xf == 0.0) | (xf == 1.0)):
            raise ContractViolation("spike max-pooling expects binary input; "
                                    "use average pooling on analog maps")
        n, c, h, w = xf.shape
        oh, ow = tk.conv2d_out_hw(h, w, self.k, self.k, self.stride, 0)
        cols = tk.im2col(xf, self.k, self.k, self.stride, 0).reshape(n, c, self.k * self.k, oh * ow)
        if ctx.tie_policy == "random":
            mx = cols.max(axis=2, keepdims=True)
            score = np.where(cols == mx, ctx.rng.random(cols.shape), -1.0)
            winner = score.argmax(axis=2)
        else:
            winner = cols.argmax(axis=2)  # first max wins
        out = np.take_along_axis(cols, winner[:, :, None, :], axis=2)[:, :, 0, :]
        self._cache = (xf.shape, winner, (oh, ow))
        return _unfold(out.reshape(n, c, oh, ow), t, b)

    def backward(self, g, ctx):
        t, b = g.shape[:2]
        x_shape, winner, (oh, ow) = self._cache
        n, c = x_shape[:2]
        gf = _fold(g).reshape(n, c, oh * ow)
        grad_cols = np.zeros((n, c, self.k * self.k, oh * ow))
        np.put_along_axis(grad_cols, winner[:, :, None, :], gf[:, :, None, :], axis=2)
        gi = tk.col2im(grad_cols.reshape(n, c * self.k * self.k, oh * ow),
                       x_shape, self.k, self.k, self.stride, 0)
        return _unfold(gi, t, b)


class AvgPool(Layer):
    """Average pooling: spatial on feature maps, block-wise on flat features.

    The flat form with k == stride == M is the population voting layer:
    each class reads the mean of its M output neurons.
    """

    def __init__(self, k: int, stride: int):
        self.k, self.stride = k, stride
        self._cache = None

    def forward(self, x, ctx):
        if x.ndim == 3:  # [T, B, F] -> voting
            t, b, f = x.shape
            if self.k != self.stride:
                raise ConfigError("flat average pooling requires kernel == stride")
            if f % self.k != 0:
                raise ShapeError(f"{f} features not divisible by pool size {self.k}")
            self._cache = ("flat", x.shape)
            return x.reshape(t, b, f // self.k, self.k).mean(axis=3)
        t, b = x.shape[:2]
        xf = _fold(x)
        n, c, h, w = xf.shape
        oh, ow = tk.conv2d_out_hw(h, w, self.k, self.k, self.stride, 0)
        cols = tk.im2col(xf, self.k, self.k, self.stride, 0).reshape(n, c, self.k * self.k, oh * ow)
        self._cache = ("map", xf.shape, (oh, ow))
        return _unfold(cols.mean(axis=2).reshape(n, c, oh, ow), t, b)

    def backward(self, g, ctx):
        if self._cache[0] == "flat":
            _, (t, b, f) = self._cache
            return np.repeat(g / self.k, self.k, axis=2).reshape(t, b, f)
        _, x_shape, (oh, ow) = self._cache
        t, b = g.shape[:2]
        n, c = x_shape[:2]
        gf = _fold(g).reshape(n, c, 1, oh * ow) / (self.k * self.k)
        grad_cols = np.broadcast_to(gf, (n, c, self.k * self.k, oh * ow))
        gi = tk.col2im(grad_cols.reshape(n, c * self.k * self.k, oh * ow),
                       x_shape, self.k, self.k, self.stride, 0)
        return _unfold(gi, t, b)


class Dropout(Layer):
    """Time-invariant dropout: one mask per sample per forward pass."""

    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
        self.p = p
        self._mask = None

    def forward(self, x, ctx):
        if not ctx.training or self.p == 0.0:
            self._mask = None
            return x
        keep = ctx.rng.random(x.shape[1:]) >= self.p  # shared over the time axis
        self._mask = keep / (1.0 - self.p)
        return x * self._mask

    def backward(self, g, ctx):
        if self._mask is None:
            return g
        return g * self._mask


def vote(s: np.ndarray, m: int) -> np.ndarray:
    """Population vote: mean over consecutive blocks of M neurons."""
    s = np.asarray(s, dtype=np.float64)
    if s.shape[-1] % m != 0:
        raise ShapeError(f"{s.shape[-1]} features not divisible by population size {m}")
    return s.reshape(s.shape[:-1] + (s.shape[-1] // m, m)).mean(axis=-1)


# --- structure-string parsing -------------------------------------------------

_ATOM_RES = [
    ("conv", re.compile(r"^c(\d+)k(\d+)s(\d+)$")),
    ("bn", re.compile(r"^BN$")),
    ("plif", re.compile(r"^PLIF$")),
    ("lif", re.compile(r"^LIF(\d+(?:\.\d+)?)$")),
    ("mp", re.compile(r"^MPk(\d+)s(\d+)$")),
    ("ap", re.compile(r"^APk(\d+)s(\d+)$")),
    ("dp", re.compile(r"^DP$")),
    ("fc", re.compile(r"^FC(\d+)$")),
]

_REPEAT_RE = re.compile(r"\{([^{}]*)\}\*(\d+)")


def expand_spec(spec: str) -> list[str]:
    """Expand `{...}*n` groups and split the structure string into atoms."""
    if any(ch.isspace() for ch in spec):
        raise ConfigError("structure string must be whitespace-free")
    prev = None
    while prev != spec:
        prev = spec
        spec = _REPEAT_RE.sub(lambda m: "-".join([m.group(1)] * int(m.group(2))), spec)
    if "{" in spec or "}" in spec:
        raise ConfigError(f"unbalanced braces in structure string at position {spec.find('{') if '{' in spec else spec.find('}')}")
    return [a for a in spec.split("-") if a]


def parse_atom(atom: str, position: int):
    for kind, rx in _ATOM_RES:
        m = rx.match(atom)
        if m:
            return kind, m.groups()
    raise ConfigError(f"unrecognized layer atom {atom!r} at position {position}")


class Network:
    """An ordered layer stack operating on [T, B, ...] sequences."""

    def __init__(self, layers: list[Layer], spec: str, input_shape: tuple):
        self.layers = layers
        self.spec = spec
        self.input_shape = input_shape

    def forward(self, x: np.ndarray, ctx: Context) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, ctx)
        return x

    def backward(self, g: np.ndarray, ctx: Context) -> np.ndarray:
        for layer in reversed(self.layers):
            g = layer.backward(g, ctx)
        return g

    def params(self) -> list[tuple[str, Param]]:
        out = []
        for i, layer in enumerate(self.layers):
            for p in layer.params():
                out.append((f"layer{i}.{p.name}", p))
        return out

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            for name, buf in layer.buffers().items():
                out.append((f"layer{i}.{name}", buf))
        return out

    def zero_grads(self):
        for _, p in self.params():
            p.zero_grad()

    def neuron_layers(self) -> list[tuple[int, SpikeNeuron]]:
        return [(i, l) for i, l in enumerate(self.layers) if isinstance(l, SpikeNeuron)]

    def taus(self) -> dict[str, float]:
        """Effective tau per spiking layer, keyed by layer index."""
        return {f"layer{i}": l.tau for i, l in self.neuron_layers()}

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        items = [(n, p.value) for n, p in self.params()]
        items.extend(self.buffers())
        return items

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        for name, arr in self.state_arrays():
            if name not in arrays:
                raise ConfigError(f"checkpoint missing array {name!r}")
            if arr.shape != arrays[name].shape:
                raise ConfigError(f"checkpoint array {name!r} has shape "
                                  f"{arrays[name].shape}, expected {arr.shape}")
            arr[...] = arrays[name]
        for _, l in self.neuron_layers():
            if l.a_param is not None:
                l.neuron.a = float(l.a_param.value)


def build_network(spec: str, input_shape: tuple, *, rng: np.random.Generator,
                  tau0: float = 2.0, v_th: float = 1.0, v_reset: float = 0.0,
                  detach_reset: bool = True, dropout_p: float = 0.5) -> Network:
    """Build a layer stack from a structure string, inferring shapes.

    input_shape is the per-sample shape: (C, H, W) for images/frames or
    (F,) for flat features.
    """
    atoms = expand_spec(spec)
    layers: list[Layer] = []
    shape = tuple(input_shape)

    def need_image(atom):
        if len(shape) != 3:
            raise ConfigError(f"layer {atom!r} requires a C,H,W input, have shape {shape}")

    for pos, atom in enumerate(atoms):
        kind, g = parse_atom(atom, pos)
        if kind == "conv":
            need_image(atom)
            out_ch, k, s = int(g[0]), int(g[1]), int(g[2])
            pad = k // 2
            layers.append(Conv2d(shape[0], out_ch, k, s, pad, rng))
            oh, ow = tk.conv2d_out_hw(shape[1], shape[2], k, k, s, pad)
            if oh < 1 or ow < 1:
                raise ConfigError(f"layer {atom!r} collapses spatial dims from {shape}")
            shape = (out_ch, oh, ow)
        elif kind == "bn":
            need_image(atom)
            layers.append(BatchNorm(shape[0]))
        elif kind == "plif":
            layers.append(SpikeNeuron(mode="plif", tau0=tau0, v_th=v_th,
                                      v_reset=v_reset, detach_reset=detach_reset))
        elif kind == "lif":
            layers.append(SpikeNeuron(mode="lif", tau=float(g[0]), v_th=v_th,
                                      v_reset=v_reset, detach_reset=detach_reset))
        elif kind in ("mp", "ap"):
            k, s = int(g[0]), int(g[1])
            if len(shape) == 3:
                oh, ow = tk.conv2d_out_hw(shape[1], shape[2], k, k, s, 0)
                if oh < 1 or ow < 1:
                    raise ConfigError(f"layer {atom!r} collapses spatial dims from {shape}")
                layers.append(SpikeMaxPool(k, s) if kind == "mp" else AvgPool(k, s))
                shape = (shape[0], oh, ow)
            else:
                if kind == "mp":
                    raise ConfigError(f"layer {atom!r}: max pooling on flat features is not supported")
                if k != s or shape[0] % k != 0:
                    raise ConfigError(f"layer {atom!r} cannot vote over {shape[0]} features")
                layers.append(AvgPool(k, s))
                shape = (shape[0] // k,)
        elif kind == "dp":
            layers.append(Dropout(dropout_p))
        elif kind == "fc":
            if len(shape) == 3:
                layers.append(Flatten())
                shape = (int(np.prod(shape)),)
            out_f = int(g[0])
            layers.append(Linear(shape[0], out_f, rng))
            shape = (out_f,)
    return Network(layers, spec, tuple(input_shape))
