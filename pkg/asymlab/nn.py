"""Network blocks, the Adam optimizer, gradient checks and checkpoints.

Blocks follow the row-vector convention, ``y = x @ W + b``, so that a batch
of time steps is a 2-d input of shape (T, features).
"""
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError

log = logging.getLogger(__name__)

EMBEDDING_SIZE = 64
HIDDEN_SIZE = 128
MLP_SIZES = (512, 256)
EMBEDDING_INIT_SCALE = 0.1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8


def parameter(data, name=None):
    """A leaf tensor that requires gradients."""
    return Tensor(data, requires_grad=True, name=name)


def fan_in_uniform(rng, fan_in, shape):
    """U(−1/√fan_in, 1/√fan_in), the initialization of linear and GRU
    weights."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Base class of blocks holding parameters and sub-blocks.

    Parameters are the attributes holding tensors that require gradients;
    sub-blocks are attributes holding modules. Names are dotted attribute
    paths in definition order, e.g. ``gru.w_z``.
    """

    def named_parameters(self, prefix=""):
        """Yield (name, parameter) pairs, recursing into sub-blocks."""
        for attr, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + attr, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{attr}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(
                            f"{prefix}{attr}.{i}."
                        )

    def parameters(self):
        """The parameters in naming order."""
        return [param for _, param in self.named_parameters()]

    def zero_grad(self):
        """Forget the gradients of all parameters."""
        for param in self.parameters():
            param.zero_grad()

    def state_dict(self):
        """Copies of the parameter values by name."""
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        """Overwrite parameter values in place.

        Raises:
            KeyError: If a parameter is missing from ``state``.
            ShapeError: If a stored shape differs.
        """
        for name, param in self.named_parameters():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != param.shape:
                raise ShapeError(
                    f"Parameter {name}: stored shape {value.shape} differs "
                    f"from {param.shape}"
                )
            param.data[...] = value

    def copy_from(self, other):
        """Copy the parameter values of an identically built module."""
        self.load_state_dict(other.state_dict())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        """The block's computation."""
        raise NotImplementedError


class Embedding(Module):
    """A table of one row per categorical symbol."""

    def __init__(self, n_symbols, width=EMBEDDING_SIZE, rng=None):
        rng = rng or np.random.default_rng(0)
        self.weight = parameter(
            rng.uniform(
                -EMBEDDING_INIT_SCALE,
                EMBEDDING_INIT_SCALE,
                size=(n_symbols, width),
            ),
            "weight",
        )

    @property
    def n_symbols(self):
        """Number of rows."""
        return self.weight.shape[0]

    def forward(self, symbols):
        """Rows of the given symbols, shape (len(symbols), width)."""
        return ad.take_rows(self.weight, symbols)


class Linear(Module):
    """y = x @ W + b."""

    def __init__(self, in_features, out_features, rng=None):
        rng = rng or np.random.default_rng(0)
        shape = (in_features, out_features)
        self.weight = parameter(fan_in_uniform(rng, in_features, shape))
        self.bias = parameter(
            fan_in_uniform(rng, in_features, (out_features,))
        )

    def forward(self, x):
        if x.shape[-1] != self.weight.shape[0]:
            raise ShapeError(
                f"Linear expects {self.weight.shape[0]} features, got "
                f"{x.shape}"
            )
        return x @ self.weight + self.bias


class MlpHead(Module):
    """Two rectified hidden layers and a linear output layer."""

    def __init__(self, in_features, out_features, sizes=MLP_SIZES, rng=None):
        rng = rng or np.random.default_rng(0)
        widths = (in_features,) + tuple(sizes)
        self.hidden = [
            Linear(widths[i], widths[i + 1], rng) for i in range(len(sizes))
        ]
        self.output = Linear(widths[-1], out_features, rng)

    def forward(self, x):
        for layer in self.hidden:
            x = ad.relu(layer(x))
        return self.output(x)


class GruCell(Module):
    """A gated recurrent unit.

    z = σ(x W_z + h U_z + b_z), r = σ(x W_r + h U_r + b_r),
    n = tanh(x W_n + (r ∘ h) U_n + b_n), h' = (1 − z) ∘ n + z ∘ h.
    """

    def __init__(self, input_size, hidden_size=HIDDEN_SIZE, rng=None):
        rng = rng or np.random.default_rng(0)
        self.hidden_size = hidden_size
        for gate in ("z", "r", "n"):
            setattr(
                self,
                f"w_{gate}",
                parameter(
                    fan_in_uniform(
                        rng, hidden_size, (input_size, hidden_size)
                    )
                ),
            )
            setattr(
                self,
                f"u_{gate}",
                parameter(
                    fan_in_uniform(
                        rng, hidden_size, (hidden_size, hidden_size)
                    )
                ),
            )
            setattr(
                self,
                f"b_{gate}",
                parameter(fan_in_uniform(rng, hidden_size, (hidden_size,))),
            )

    @property
    def input_size(self):
        """Number of input features."""
        return self.w_z.shape[0]

    def initial_state(self):
        """The zero hidden state."""
        return Tensor(np.zeros(self.hidden_size))

    def forward(self, x, h):
        """One step: (input, hidden) → next hidden."""
        if x.shape[-1] != self.input_size or h.shape[-1] != self.hidden_size:
            raise ShapeError(
                f"GRU expects input {self.input_size} and hidden "
                f"{self.hidden_size}, got {x.shape} and {h.shape}"
            )
        z = ad.sigmoid(x @ self.w_z + h @ self.u_z + self.b_z)
        r = ad.sigmoid(x @ self.w_r + h @ self.u_r + self.b_r)
        n = ad.tanh(x @ self.w_n + (r * h) @ self.u_n + self.b_n)
        return (1.0 - z) * n + z * h

    def unroll(self, inputs, h=None):
        """Run over the rows of a (T, input) tensor.

        Returns:
            (Tensor, Tensor): The hidden states of shape (T, hidden) and the
                last hidden state.
        """
        h = self.initial_state() if h is None else h
        states = []
        for t in range(inputs.shape[0]):
            h = self(inputs[t], h)
            states.append(h)
        log.debug("GRU unrolled over %d steps", len(states))
        return ad.stack(states), h


@dataclass
class AdamState:
    """Moment accumulators and step counter of Adam."""

    first: list
    second: list
    step: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON

    @classmethod
    def zeros_like(cls, params):
        """A fresh state for the given parameters."""
        return cls(
            [np.zeros_like(p.data) for p in params],
            [np.zeros_like(p.data) for p in params],
        )


def adam_step(params, grads, lr, state):
    """One bias-corrected Adam update, in place.

    Args:
        params (list of Tensor): The parameters to update.
        grads (list of numpy.ndarray): Their gradients, None counts as zero.
        lr (float): The learning rate.
        state (AdamState): The optimizer state, updated in place.

    Raises:
        ShapeError: If a gradient or moment shape differs from its
            parameter's.
    """
    if not len(params) == len(grads) == len(state.first):
        raise ShapeError(
            f"{len(params)} parameters, {len(grads)} gradients and "
            f"{len(state.first)} moments"
        )
    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for i, (param, grad) in enumerate(zip(params, grads)):
        grad = np.zeros_like(param.data) if grad is None else grad
        if grad.shape != param.shape or state.first[i].shape != param.shape:
            raise ShapeError(
                f"Gradient {grad.shape} does not match parameter "
                f"{param.shape}"
            )
        state.first[i] = state.beta1 * state.first[i] + (
            1 - state.beta1
        ) * grad
        state.second[i] = state.beta2 * state.second[i] + (
            1 - state.beta2
        ) * (grad * grad)
        param.data -= (
            lr
            * (state.first[i] / correction1)
            / (np.sqrt(state.second[i] / correction2) + state.epsilon)
        )


class Adam:
    """Adam over a fixed list of parameters."""

    def __init__(self, params, lr):
        self.params = list(params)
        self.lr = lr
        self.state = AdamState.zeros_like(self.params)

    def zero_grad(self):
        """Forget the gradients of the optimized parameters."""
        for param in self.params:
            param.zero_grad()

    def step(self):
        """Apply the accumulated gradients."""
        adam_step(
            self.params, [p.grad for p in self.params], self.lr, self.state
        )

    def state_arrays(self):
        """Named arrays of the optimizer state for checkpoints."""
        arrays = {}
        for i, (first, second) in enumerate(
            zip(self.state.first, self.state.second)
        ):
            arrays[f"first.{i}"] = first
            arrays[f"second.{i}"] = second
        return arrays

    def load_state_arrays(self, arrays, step):
        """Restore the optimizer state written by :meth:`state_arrays`."""
        for i, param in enumerate(self.params):
            for moments, kind in (
                (self.state.first, "first"),
                (self.state.second, "second"),
            ):
                value = np.asarray(arrays[f"{kind}.{i}"])
                if value.shape != param.shape:
                    raise ShapeError(
                        f"Optimizer {kind} moment {i}: shape {value.shape} "
                        f"differs from {param.shape}"
                    )
                moments[i] = value.copy()
        self.state.step = int(step)


@dataclass
class GroupCheck:
    """The gradient check result of one parameter group."""

    name: str
    max_error: float = 0.0
    checked: int = 0
    tolerance: float = 1e-4

    @property
    def passed(self):
        """Whether every checked component is within tolerance."""
        return self.max_error <= self.tolerance


@dataclass
class GradcheckReport:
    """Gradient check results per parameter group."""

    groups: dict = field(default_factory=dict)

    @property
    def passed(self):
        """Whether all groups passed."""
        return all(group.passed for group in self.groups.values())

    def failed_groups(self):
        """Names of the groups that failed."""
        return [
            name for name, group in self.groups.items() if not group.passed
        ]

    def __str__(self):
        lines = []
        for name, group in self.groups.items():
            status = "ok" if group.passed else "FAILED"
            lines.append(
                f"{name}: {status} (max relative error {group.max_error:.3g} "
                f"over {group.checked} components)"
            )
        return "\n".join(lines)


def relative_error(analytic, numeric, floor=1e-6):
    """|a − n| / max(|a|, |n|, floor)."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradcheck(
    module,
    forward,
    sample_inputs,
    rng,
    tolerance=1e-4,
    n_samples=20,
    components=8,
    step=1e-5,
):
    """Compare backpropagated gradients with central finite differences.

    The block output is reduced to a scalar with a fixed random projection.
    For every sampled input, up to ``components`` random entries of each
    parameter group are perturbed by ±step.

    Args:
        module (Module): The block owning the parameters.
        forward (callable): ``forward(module, inputs)`` returns a Tensor.
        sample_inputs (callable): ``sample_inputs(rng)`` draws one input.
        rng (numpy.random.Generator): The random stream.
        tolerance (float): Maximum relative error, > 0.

    Returns:
        (GradcheckReport): Results per parameter group.
    """
    if tolerance <= 0.0:
        raise ValueError(f"tolerance={tolerance} must be > 0")
    report = GradcheckReport(
        {
            name: GroupCheck(name, tolerance=tolerance)
            for name, _ in module.named_parameters()
        }
    )
    projection = None
    for _ in range(n_samples):
        inputs = sample_inputs(rng)
        module.zero_grad()
        output = forward(module, inputs)
        if projection is None:
            projection = rng.normal(size=output.shape)

        def objective():
            with ad.no_grad():
                return float(np.sum(forward(module, inputs).data * projection))

        (output * projection).sum().backward()
        for name, param in module.named_parameters():
            analytic = (
                np.zeros_like(param.data) if param.grad is None else param.grad
            )
            flat = param.data.reshape(-1)
            count = min(components, flat.size)
            for index in rng.choice(flat.size, size=count, replace=False):
                original = flat[index]
                flat[index] = original + step
                plus = objective()
                flat[index] = original - step
                minus = objective()
                flat[index] = original
                numeric = (plus - minus) / (2.0 * step)
                group = report.groups[name]
                group.max_error = max(
                    group.max_error,
                    relative_error(analytic.reshape(-1)[index], numeric),
                )
                group.checked += 1
    module.zero_grad()
    for name in report.failed_groups():
        log.warning("Gradient check failed for %s", name)
    return report


CHECKPOINT_META = "meta.json"


def save_checkpoint(path, modules, optimizers=None, meta=None):
    """Write named modules and optimizer states to a ``.npz`` archive.

    Layout: ``param/<module>/<parameter>`` arrays,
    ``adam/<optimizer>/<first|second>.<i>`` arrays and a ``meta.json``
    entry (utf-8 bytes) holding the user meta data, the parameter shapes and
    the optimizer step counters.

    Args:
        path (str): Target file.
        modules (dict): Name to Module.
        optimizers (dict): Name to Adam.
        meta (dict): JSON-serializable extra information.
    """
    optimizers = optimizers or {}
    arrays = {}
    shapes = {}
    for module_name, module in modules.items():
        for name, value in module.state_dict().items():
            arrays[f"param/{module_name}/{name}"] = value
            shapes[f"{module_name}/{name}"] = list(value.shape)
    for opt_name, optimizer in optimizers.items():
        for name, value in optimizer.state_arrays().items():
            arrays[f"adam/{opt_name}/{name}"] = value
    document = {
        "meta": meta or {},
        "shapes": shapes,
        "optimizer_steps": {
            name: optimizer.state.step
            for name, optimizer in optimizers.items()
        },
    }
    arrays[CHECKPOINT_META] = np.frombuffer(
        json.dumps(document, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    buffer = io.BytesIO()
    np.savez(buffer, **arrays)
    with open(path, "wb") as stream:
        stream.write(buffer.getvalue())
    log.info("Saved checkpoint %s", path)


def load_checkpoint(path, modules, optimizers=None):
    """Restore modules and optimizers written by :func:`save_checkpoint`.

    Returns:
        (dict): The user meta data.

    Raises:
        ShapeError: If a stored shape differs from the module's.
    """
    optimizers = optimizers or {}
    with np.load(path) as archive:
        document = json.loads(bytes(archive[CHECKPOINT_META]).decode("utf-8"))
        for module_name, module in modules.items():
            prefix = f"param/{module_name}/"
            module.load_state_dict(
                {
                    key[len(prefix) :]: archive[key]
                    for key in archive.files
                    if key.startswith(prefix)
                }
            )
        for opt_name, optimizer in optimizers.items():
            prefix = f"adam/{opt_name}/"
            optimizer.load_state_arrays(
                {
                    key[len(prefix) :]: archive[key]
                    for key in archive.files
                    if key.startswith(prefix)
                },
                document["optimizer_steps"][opt_name],
            )
    log.info("Loaded checkpoint %s", path)
    return document["meta"]


def read_checkpoint_meta(path):
    """The user meta data of a checkpoint, without restoring anything."""
    with np.load(path) as archive:
        document = json.loads(bytes(archive[CHECKPOINT_META]).decode("utf-8"))
    return document["meta"]
