"""
Dense dueling Q-networks in plain numpy (float64).

The topology is fixed: a ReLU trunk, a linear advantage head of width
``action_count`` reading the trunk output, and a value stream (an optional
ReLU hidden layer of ``value_width`` units, then a linear unit).  The two
streams are recombined as ``q = V + A - mean(A)``.

Parameters live in ``QNetwork.params`` in this order, which is also the order
of the checkpoint file::

    trunk W_1, b_1, ..., W_k, b_k, advantage W, b, [value hidden W, b], value W, b

Weights are stored as ``(fan_in, fan_out)`` so a layer is ``x @ W + b``.
"""

import io
import logging
import struct

import numpy as np

from .errors import CheckpointError, InvalidArgumentError, NumericFailureError

logger = logging.getLogger(__name__)

DTYPE = np.float64
CHECKPOINT_MAGIC = b'HADRLNET1'

# named (trunk widths, value width) presets
ARCH_PRESETS = {
    'desk': ((128, 128), 64),
    'large': ((2048, 2048), 512),
}

DEFAULT_LR = 1e-4


class QNetwork:
    """Parameters of one dueling approximator.

    ``arch`` is ``(input_width, trunk_1, ..., trunk_k)``.
    """

    def __init__(self, arch, action_count, value_width=0, params=None):
        arch = tuple(int(w) for w in arch)
        if not arch:
            raise InvalidArgumentError('architecture must list at least the input width')
        if any(w < 1 for w in arch):
            raise InvalidArgumentError('layer widths must be >= 1, got {}'.format(arch))
        if action_count < 1:
            raise InvalidArgumentError('action_count must be >= 1')
        if value_width < 0:
            raise InvalidArgumentError('value_width must be >= 0')
        self.arch = arch
        self.action_count = int(action_count)
        self.value_width = int(value_width)
        if params is None:
            params = [np.zeros(shape, dtype=DTYPE) for shape in self.param_shapes()]
        self.params = list(params)
        self._check_shapes(self.params)

    @property
    def input_width(self):
        return self.arch[0]

    @property
    def trunk_depth(self):
        return len(self.arch) - 1

    @property
    def penultimate_width(self):
        """Width of the trunk output feeding the advantage head."""
        return self.arch[-1]

    @property
    def descriptor(self):
        return self.arch + (self.value_width, self.action_count)

    def param_shapes(self):
        shapes = []
        for fan_in, fan_out in zip(self.arch[:-1], self.arch[1:]):
            shapes += [(fan_in, fan_out), (fan_out,)]
        last = self.arch[-1]
        shapes += [(last, self.action_count), (self.action_count,)]
        if self.value_width:
            shapes += [(last, self.value_width), (self.value_width,)]
            last = self.value_width
        shapes += [(last, 1), (1,)]
        return shapes

    def _check_shapes(self, params):
        shapes = self.param_shapes()
        if len(params) != len(shapes):
            msg = 'expected {} parameter arrays, got {}'
            raise InvalidArgumentError(msg.format(len(shapes), len(params)))
        for i, (p, shape) in enumerate(zip(params, shapes)):
            if p.shape != shape:
                msg = 'parameter {} has shape {}, expected {}'
                raise InvalidArgumentError(msg.format(i, p.shape, shape))

    # convenient views of the parameter list
    @property
    def trunk(self):
        k = self.trunk_depth
        return [(self.params[2 * i], self.params[2 * i + 1]) for i in range(k)]

    @property
    def advantage_head(self):
        k = 2 * self.trunk_depth
        return self.params[k], self.params[k + 1]

    @property
    def value_hidden(self):
        if not self.value_width:
            return None
        k = 2 * self.trunk_depth + 2
        return self.params[k], self.params[k + 1]

    @property
    def value_head(self):
        return self.params[-2], self.params[-1]

    def copy(self):
        return QNetwork(self.arch, self.action_count, self.value_width,
                        [p.copy() for p in self.params])

    def shape_matches(self, other):
        return self.descriptor == other.descriptor

    def is_finite(self):
        return all(np.isfinite(p).all() for p in self.params)

    def __repr__(self):
        return 'QNetwork(arch={}, action_count={}, value_width={})'.format(
            self.arch, self.action_count, self.value_width)


# A target network is a full parameter copy; the distinction is in how it is
# updated (only through sync_target).
TargetNetwork = QNetwork


def init_network(arch, action_count, seed, value_width=0):
    """Scaled-uniform weights (bound ``sqrt(6 / (fan_in + fan_out))``), zero
    biases.  Deterministic for a fixed seed."""
    if not arch:
        raise InvalidArgumentError('architecture must not be empty')
    net = QNetwork(arch, action_count, value_width)
    rng = np.random.default_rng(seed)
    for p in net.params:
        if p.ndim == 2:
            fan_in, fan_out = p.shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            p[...] = rng.uniform(-bound, bound, size=p.shape)
    return net


def make_target(net):
    return net.copy()


def _as_batch(net, states):
    states = np.asarray(states, dtype=DTYPE)
    single = states.ndim == 1
    if single:
        states = states[np.newaxis, :]
    if states.ndim != 2 or states.shape[1] != net.input_width:
        msg = 'state width {} does not match network input width {}'
        raise InvalidArgumentError(msg.format(states.shape[-1], net.input_width))
    return states, single


def _forward(net, x):
    """Batch forward pass returning q-values and the cache needed by backprop."""
    hidden = [x]
    h = x
    for W, b in net.trunk:
        h = np.maximum(h @ W + b, 0.0)
        hidden.append(h)
    Wa, ba = net.advantage_head
    adv = h @ Wa + ba
    hv = h
    if net.value_width:
        Wh, bh = net.value_hidden
        hv = np.maximum(h @ Wh + bh, 0.0)
    Wv, bv = net.value_head
    value = hv @ Wv + bv
    q = value + adv - adv.mean(axis=1, keepdims=True)
    return q, (hidden, hv)


def _backward(net, cache, dq):
    """Gradients of every parameter given dL/dq, in ``net.params`` order."""
    hidden, hv = cache
    h = hidden[-1]
    d_value = dq.sum(axis=1, keepdims=True)
    d_adv = dq - dq.mean(axis=1, keepdims=True)

    Wa, _ = net.advantage_head
    Wv, _ = net.value_head
    head_grads = [h.T @ d_adv, d_adv.sum(axis=0)]
    dh = d_adv @ Wa.T
    if net.value_width:
        Wh, _ = net.value_hidden
        dz = (d_value @ Wv.T) * (hv > 0)
        head_grads += [h.T @ dz, dz.sum(axis=0)]
        dh += dz @ Wh.T
    else:
        dh += d_value @ Wv.T
    head_grads += [hv.T @ d_value, d_value.sum(axis=0)]

    trunk_grads = []
    for i in range(net.trunk_depth - 1, -1, -1):
        W, _ = net.trunk[i]
        dz = dh * (hidden[i + 1] > 0)
        trunk_grads = [hidden[i].T @ dz, dz.sum(axis=0)] + trunk_grads
        dh = dz @ W.T
    return trunk_grads + head_grads


def forward(net, state):
    """Q-values for one state (vector in, vector out) or a batch (rows)."""
    x, single = _as_batch(net, state)
    q, _ = _forward(net, x)
    return q[0] if single else q


def penultimate(net, state):
    """Trunk output (the features the advantage head reads)."""
    x, single = _as_batch(net, state)
    _, (hidden, _) = _forward(net, x)
    h = hidden[-1]
    return h[0] if single else h


def td_loss_and_grads(net, batch_states, batch_actions, batch_targets):
    """Mean squared TD error on the taken actions and its gradients.

    Returns ``(loss, grads)`` with ``grads`` aligned to ``net.params``.
    """
    x, _ = _as_batch(net, batch_states)
    actions = np.asarray(batch_actions, dtype=np.int64).reshape(-1)
    targets = np.asarray(batch_targets, dtype=DTYPE).reshape(-1)
    n = x.shape[0]
    if n == 0:
        raise InvalidArgumentError('batch must not be empty')
    if actions.shape[0] != n or targets.shape[0] != n:
        raise InvalidArgumentError('states, actions and targets must have equal length')
    if actions.min() < 0 or actions.max() >= net.action_count:
        msg = 'actions must lie in [0, {}]'
        raise InvalidArgumentError(msg.format(net.action_count - 1))

    q, cache = _forward(net, x)
    rows = np.arange(n)
    diff = q[rows, actions] - targets
    loss = float(np.mean(diff ** 2))
    dq = np.zeros_like(q)
    dq[rows, actions] = 2.0 * diff / n
    return loss, _backward(net, cache, dq)


class OptimizerState:
    """Moment estimates for the adaptive update, or nothing for plain mode."""

    ADAM = 'adam'
    SGD = 'sgd'

    def __init__(self, net, mode=ADAM, beta1=0.9, beta2=0.999, eps=1e-8):
        if mode not in (self.ADAM, self.SGD):
            raise InvalidArgumentError('unknown optimizer mode {!r}'.format(mode))
        self.mode = mode
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = [np.zeros_like(p) for p in net.params]
        self.v = [np.zeros_like(p) for p in net.params]


def optimizer_step(net, grads, state, lr=DEFAULT_LR):
    """Apply one update in place.  Returns ``(net, state)``.

    Non-finite gradients, or an update that would leave a non-finite parameter,
    are rejected with NumericFailureError and the network is left untouched.
    """
    if len(grads) != len(net.params):
        raise InvalidArgumentError('gradient list does not match the parameters')
    for i, (g, p) in enumerate(zip(grads, net.params)):
        if g.shape != p.shape:
            msg = 'gradient {} has shape {}, parameter has {}'
            raise InvalidArgumentError(msg.format(i, g.shape, p.shape))
        if not np.isfinite(g).all():
            raise NumericFailureError('non-finite gradient for parameter {}'.format(i))

    if state.mode == OptimizerState.SGD:
        updated = [p - lr * g for p, g in zip(net.params, grads)]
        new_m, new_v = state.m, state.v
    else:
        t = state.step + 1
        b1, b2 = state.beta1, state.beta2
        new_m = [b1 * m + (1 - b1) * g for m, g in zip(state.m, grads)]
        new_v = [b2 * v + (1 - b2) * g * g for v, g in zip(state.v, grads)]
        c1 = 1 - b1 ** t
        c2 = 1 - b2 ** t
        updated = [p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
                   for p, m, v in zip(net.params, new_m, new_v)]

    for i, p in enumerate(updated):
        if not np.isfinite(p).all():
            raise NumericFailureError('update produced non-finite parameter {}'.format(i))

    for p, new in zip(net.params, updated):
        p[...] = new
    state.m, state.v = new_m, new_v
    state.step += 1
    return net, state


def sync_target(net, target):
    """Copy every online parameter into ``target`` (in place)."""
    if not net.shape_matches(target):
        msg = 'cannot sync {!r} into {!r}'
        raise InvalidArgumentError(msg.format(net, target))
    for src, dst in zip(net.params, target.params):
        np.copyto(dst, src)
    return target


def _relative_error(analytic, numeric, floor=1e-6):
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    err = np.abs(analytic - numeric) / np.maximum(scale, floor)
    err[scale < 1e-12] = 0.0
    return err


def finite_diff_check(net, state, action, target, epsilon=1e-5, grads=None):
    """Largest relative error between analytic gradients and central finite
    differences of the TD loss.

    ``state`` may be one state or a batch (then ``action`` and ``target`` are
    sequences).  Pass ``grads`` to check a gradient other than the one
    computed by td_loss_and_grads.
    """
    if epsilon <= 0:
        raise InvalidArgumentError('epsilon must be positive')
    states, _ = _as_batch(net, state)
    actions = np.atleast_1d(action)
    targets = np.atleast_1d(target)
    if grads is None:
        _, grads = td_loss_and_grads(net, states, actions, targets)

    worst = 0.0
    for p, g in zip(net.params, grads):
        numeric = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + epsilon
            plus, _ = td_loss_and_grads(net, states, actions, targets)
            p[idx] = orig - epsilon
            minus, _ = td_loss_and_grads(net, states, actions, targets)
            p[idx] = orig
            numeric[idx] = (plus - minus) / (2 * epsilon)
        if p.size:
            worst = max(worst, float(_relative_error(np.asarray(g), numeric).max()))
    logger.debug('finite-difference check: worst relative error %.3g', worst)
    return worst


def save_network(net, f):
    """Write ``net`` to a path or binary file object.

    Layout: magic ``HADRLNET1``; uint32 count N; N uint32 descriptor entries
    ``(input, trunk..., value_width, action_count)``; then every parameter as
    little-endian float64 in ``net.params`` order.  All integers little-endian.
    """
    if isinstance(f, (str, bytes)) or hasattr(f, '__fspath__'):
        with open(f, 'wb') as fh:
            return save_network(net, fh)
    descriptor = net.descriptor
    f.write(CHECKPOINT_MAGIC)
    f.write(struct.pack('<I', len(descriptor)))
    f.write(np.asarray(descriptor, dtype='<u4').tobytes())
    for p in net.params:
        f.write(np.ascontiguousarray(p, dtype='<f8').tobytes())


def load_network(f):
    if isinstance(f, (str, bytes)) or hasattr(f, '__fspath__'):
        with open(f, 'rb') as fh:
            return load_network(fh)
    magic = f.read(len(CHECKPOINT_MAGIC))
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError('bad magic {!r}; not a network checkpoint'.format(magic))
    raw = f.read(4)
    if len(raw) != 4:
        raise CheckpointError('truncated checkpoint header')
    count, = struct.unpack('<I', raw)
    if count < 3:
        raise CheckpointError('descriptor too short ({} entries)'.format(count))
    raw = f.read(4 * count)
    if len(raw) != 4 * count:
        raise CheckpointError('truncated architecture descriptor')
    descriptor = [int(d) for d in np.frombuffer(raw, dtype='<u4')]
    arch, value_width, action_count = descriptor[:-2], descriptor[-2], descriptor[-1]
    try:
        net = QNetwork(arch, action_count, value_width)
    except InvalidArgumentError as e:
        raise CheckpointError('bad architecture descriptor: {}'.format(e)) from None
    for p in net.params:
        nbytes = 8 * p.size
        raw = f.read(nbytes)
        if len(raw) != nbytes:
            raise CheckpointError('truncated parameter data')
        p[...] = np.frombuffer(raw, dtype='<f8').reshape(p.shape)
    if f.read(1):
        raise CheckpointError('trailing bytes after parameter data')
    return net


def network_to_bytes(net):
    buf = io.BytesIO()
    save_network(net, buf)
    return buf.getvalue()
