"""Dense tanh MLP with analytic spatial derivatives and parameter gradients.

The network family is fixed: affine layers with tanh on every hidden layer
and a purely affine output layer.  Spatial first and second derivatives are
propagated layer by layer with the closed-form recurrences for tanh
(tanh' = 1 - t^2, tanh'' = -2 t (1 - t^2)), and parameter gradients of
scalar objectives built from these evaluations are obtained by reverse-mode
accumulation over the augmented forward pass.  Everything is float64 and
fully vectorized over batches of points.

Array layout conventions (batch APIs):
    value        (n, out)
    grad         (n, dim, out)
    lap          (n, out)
    hess packed  (n, n_pairs, out)   upper-triangular pairs, see `sym_pairs`
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MlpParams",
    "JetValue",
    "JetBatch",
    "JetCotangent",
    "Workspace",
    "InvalidArchitectureError",
    "init_mlp",
    "flatten_params",
    "unflatten_params",
    "param_count",
    "forward",
    "jet",
    "jet_batch",
    "forward_stack",
    "backward_stack",
    "PointwiseObjective",
    "ScaledSumObjective",
    "param_gradient",
    "sym_pairs",
    "expand_packed_hess",
    "MODE_VALUE",
    "MODE_GRAD",
    "MODE_LAP",
    "MODE_HESS",
]

# propagation modes, ordered by how much derivative state they carry
MODE_VALUE = "value"
MODE_GRAD = "grad"
MODE_LAP = "lap"
MODE_HESS = "hess"


class InvalidArchitectureError(ValueError):
    """Raised for empty or non-positive layer size lists."""


def sym_pairs(dim: int) -> list[tuple[int, int]]:
    """Upper-triangular index pairs for packed symmetric second derivatives."""
    return [(k, l) for k in range(dim) for l in range(k, dim)]


def pair_index(dim: int) -> dict[tuple[int, int], int]:
    idx = {}
    for p, (k, l) in enumerate(sym_pairs(dim)):
        idx[(k, l)] = p
        idx[(l, k)] = p
    return idx


@dataclass
class MlpParams:
    """Weights and biases of a dense tanh MLP.

    weights[l] has shape (layer_sizes[l+1], layer_sizes[l]) and biases[l]
    has length layer_sizes[l+1].
    """

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return param_count(self.layer_sizes)

    def copy(self) -> "MlpParams":
        return MlpParams(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )


def param_count(layer_sizes: list[int]) -> int:
    return sum(
        layer_sizes[l + 1] * layer_sizes[l] + layer_sizes[l + 1]
        for l in range(len(layer_sizes) - 1)
    )


def _check_architecture(layer_sizes) -> list[int]:
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise InvalidArchitectureError(
            f"need at least input and output layer sizes, got {sizes}"
        )
    if any(s < 1 for s in sizes):
        raise InvalidArchitectureError(f"layer sizes must be positive, got {sizes}")
    return sizes


def init_mlp(layer_sizes: list[int], seed: int) -> MlpParams:
    """Xavier-uniform weights in [-a, a] with a = sqrt(6/(fan_in+fan_out)); zero biases.

    Deterministic for a fixed seed.
    """
    sizes = _check_architecture(layer_sizes)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for l in range(len(sizes) - 1):
        fan_in, fan_out = sizes[l], sizes[l + 1]
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(sizes, weights, biases)


def flatten_params(params: MlpParams) -> np.ndarray:
    """Flat parameter vector: per layer, row-major weights then biases."""
    parts = []
    for w, b in zip(params.weights, params.biases):
        parts.append(w.reshape(-1))
        parts.append(b)
    return np.concatenate(parts)


def unflatten_params(layer_sizes: list[int], vec: np.ndarray) -> MlpParams:
    sizes = _check_architecture(layer_sizes)
    expected = param_count(sizes)
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (expected,):
        raise ValueError(f"expected flat vector of length {expected}, got {vec.shape}")
    weights, biases, pos = [], [], 0
    for l in range(len(sizes) - 1):
        n_out, n_in = sizes[l + 1], sizes[l]
        weights.append(vec[pos : pos + n_out * n_in].reshape(n_out, n_in).copy())
        pos += n_out * n_in
        biases.append(vec[pos : pos + n_out].copy())
        pos += n_out
    return MlpParams(sizes, weights, biases)


@dataclass
class JetValue:
    """Value and exact spatial derivatives of the network at one point.

    grad_x is (out, dim); hess_x is (out, dim, dim), symmetric in its two
    trailing indices, populated only when second derivatives were requested.
    """

    value: np.ndarray
    grad_x: np.ndarray
    hess_x: np.ndarray | None = None


@dataclass
class JetBatch:
    """Batched jets in the internal width-last layout."""

    value: np.ndarray  # (n, out)
    grad: np.ndarray | None = None  # (n, dim, out)
    lap: np.ndarray | None = None  # (n, out)
    hess: np.ndarray | None = None  # (n, n_pairs, out) packed symmetric
    dim: int = 0

    def laplacian(self) -> np.ndarray:
        """(n, out) Laplacian from whichever second-derivative state is carried."""
        if self.lap is not None:
            return self.lap
        if self.hess is not None:
            pidx = pair_index(self.dim)
            diag = [pidx[(k, k)] for k in range(self.dim)]
            return self.hess[:, diag, :].sum(axis=1)
        raise ValueError("jet carries no second derivatives")


@dataclass
class JetCotangent:
    """Adjoint seed for backward_stack; entries default to absent (zero)."""

    bar_value: np.ndarray | None = None
    bar_grad: np.ndarray | None = None
    bar_lap: np.ndarray | None = None
    bar_hess: np.ndarray | None = None  # packed layout matching JetBatch.hess


def expand_packed_hess(packed: np.ndarray, dim: int) -> np.ndarray:
    """(n, n_pairs, out) packed -> (n, out, dim, dim) full symmetric."""
    n, _, out = packed.shape
    full = np.empty((n, out, dim, dim))
    for p, (k, l) in enumerate(sym_pairs(dim)):
        full[:, :, k, l] = packed[:, p, :]
        full[:, :, l, k] = packed[:, p, :]
    return full


class Workspace:
    """Reusable named buffers so per-chunk evaluation does not reallocate.

    Buffers are keyed by name and sized by their first request; later
    requests with a smaller leading dimension (tail chunks, smaller point
    sets) receive a contiguous view instead of a fresh allocation.
    """

    def __init__(self):
        self._bufs: dict[str, np.ndarray] = {}

    def get(self, key: str, shape: tuple[int, ...]) -> np.ndarray:
        buf = self._bufs.get(key)
        if buf is None or buf.shape[1:] != shape[1:] or buf.shape[0] < shape[0]:
            buf = np.empty(shape)
            self._bufs[key] = buf
        return buf if buf.shape == shape else buf[: shape[0]]


@dataclass
class _LayerRecord:
    # stored forward state needed by the backward sweep
    t: np.ndarray | None = None  # tanh(z), hidden layers only
    s: np.ndarray | None = None  # 1 - t^2
    u: np.ndarray | None = None  # -2 t (1 - t^2)
    gz: np.ndarray | None = None  # (n, dim, w) pre-activation spatial gradient
    lz: np.ndarray | None = None  # (n, w) pre-activation Laplacian
    hz: np.ndarray | None = None  # (n, P, w) pre-activation packed Hessian
    q: np.ndarray | None = None  # sum_k gz_k^2 (lap mode)
    a_in: np.ndarray | None = None  # layer input activations
    g_in: np.ndarray | None = None
    l_in: np.ndarray | None = None
    h_in: np.ndarray | None = None


@dataclass
class Stack:
    """Forward evaluation record: outputs plus everything backward needs."""

    params: MlpParams
    x: np.ndarray
    mode: str
    out: JetBatch
    layers: list[_LayerRecord] = field(default_factory=list)


def _as_batch(x: np.ndarray, in_dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        if in_dim != 1:
            raise ValueError(f"scalar input for network with input dim {in_dim}")
        return x.reshape(1, 1), True
    if x.ndim == 1:
        if x.shape[0] != in_dim:
            raise ValueError(f"point has dim {x.shape[0]}, network expects {in_dim}")
        return x.reshape(1, in_dim), True
    if x.shape[1] != in_dim:
        raise ValueError(f"points have dim {x.shape[1]}, network expects {in_dim}")
    return x, False


def forward_stack(
    params: MlpParams,
    x: np.ndarray,
    mode: str = MODE_VALUE,
    ws: Workspace | None = None,
    keep: bool = True,
) -> Stack:
    """Augmented forward pass. With keep=True the stack supports backward_stack.

    Buffers come from `ws` when given, so repeated chunked evaluation reuses
    memory; note that a later forward on the same workspace invalidates the
    stored stack of the earlier one.
    """
    x2, _ = _as_batch(x, params.in_dim)
    n, dim = x2.shape
    pairs = sym_pairs(dim)
    P = len(pairs)
    iu = np.array([k for k, _ in pairs])
    il = np.array([l for _, l in pairs])
    get = ws.get if ws is not None else (lambda key, shape: np.empty(shape))

    a = x2
    g = None  # input gradient is the identity; handled implicitly at layer 0
    lp = None  # zero at the input
    hp = None  # zero at the input
    n_layers = params.n_layers
    records: list[_LayerRecord] = []

    for l in range(n_layers):
        W, b = params.weights[l], params.biases[l]
        w_out = W.shape[0]
        rec = _LayerRecord(a_in=a, g_in=g, l_in=lp, h_in=hp)

        z = get(f"z{l}", (n, w_out))
        np.dot(a, W.T, out=z)
        z += b

        gz = lz = hz = None
        if mode != MODE_VALUE:
            gz = get(f"gz{l}", (n, dim, w_out))
            if g is None:
                # spatial gradient of the first pre-activation is the weight matrix
                gz[:] = W.T[None, :, :]
            else:
                np.dot(g.reshape(n * dim, -1), W.T, out=gz.reshape(n * dim, w_out))
        if mode == MODE_LAP:
            if lp is not None:
                lz = get(f"lz{l}", (n, w_out))
                np.dot(lp, W.T, out=lz)
        if mode == MODE_HESS:
            if hp is not None:
                hz = get(f"hz{l}", (n, P, w_out))
                np.dot(hp.reshape(n * P, -1), W.T, out=hz.reshape(n * P, w_out))

        rec.gz, rec.lz, rec.hz = gz, lz, hz

        if l == n_layers - 1:
            # affine output layer
            a, g, lp, hp = z, gz, lz, hz
            if mode == MODE_LAP and lz is None:
                lp = np.zeros((n, w_out))
            if mode == MODE_HESS and hz is None:
                hp = np.zeros((n, P, w_out))
            records.append(rec)
            break

        t = get(f"t{l}", (n, w_out))
        np.tanh(z, out=t)
        s = get(f"s{l}", (n, w_out))
        np.multiply(t, t, out=s)
        np.subtract(1.0, s, out=s)
        u = get(f"u{l}", (n, w_out))
        np.multiply(t, s, out=u)
        u *= -2.0
        rec.t, rec.s, rec.u = t, s, u

        a = t
        if mode != MODE_VALUE:
            g = get(f"g{l}", (n, dim, w_out))
            np.multiply(gz, s[:, None, :], out=g)
        if mode == MODE_LAP:
            q = get(f"q{l}", (n, w_out))
            np.einsum("nkw,nkw->nw", gz, gz, out=q)
            rec.q = q
            lp_new = get(f"l{l}", (n, w_out))
            np.multiply(u, q, out=lp_new)
            if lz is not None:
                lp_new += s * lz
            lp = lp_new
        if mode == MODE_HESS:
            hp_new = get(f"h{l}", (n, P, w_out))
            np.multiply(gz[:, iu, :], gz[:, il, :], out=hp_new)
            hp_new *= u[:, None, :]
            if hz is not None:
                tmp = get(f"htmp{l}", (n, P, w_out))
                np.multiply(hz, s[:, None, :], out=tmp)
                hp_new += tmp
            hp = hp_new
        records.append(rec)

    out = JetBatch(value=a, grad=g, lap=lp, hess=hp, dim=dim)
    return Stack(params=params, x=x2, mode=mode, out=out, layers=records if keep else [])


def backward_stack(
    stack: Stack,
    bar: JetCotangent,
    ws: Workspace | None = None,
    out_grad: np.ndarray | None = None,
) -> np.ndarray:
    """Accumulate d(objective)/d(theta) for the adjoint seed `bar`.

    The seed holds d(objective)/d(output value/grad/lap/hess) in the batch
    layouts of JetBatch.  The result is a flat vector in the convention of
    flatten_params, added into out_grad when provided.  May be called
    repeatedly on one stack with different seeds.
    """
    params, mode = stack.params, stack.mode
    if not stack.layers:
        raise ValueError("stack was built with keep=False")
    n, dim = stack.x.shape
    pairs = sym_pairs(dim)
    P = len(pairs)
    iu = np.array([k for k, _ in pairs])
    il = np.array([l for _, l in pairs])
    get = ws.get if ws is not None else (lambda key, shape: np.empty(shape))

    if out_grad is None:
        out_grad = np.zeros(params.n_params)
    # per-layer views into the flat gradient vector
    w_views, b_views, pos = [], [], 0
    for l in range(params.n_layers):
        n_out, n_in = params.weights[l].shape
        w_views.append(out_grad[pos : pos + n_out * n_in].reshape(n_out, n_in))
        pos += n_out * n_in
        b_views.append(out_grad[pos : pos + n_out])
        pos += n_out

    last = params.n_layers - 1
    w_last = params.layer_sizes[-1]
    ab = get("bk.a", (n, w_last))
    if bar.bar_value is not None:
        ab[:] = bar.bar_value
    else:
        ab[:] = 0.0
    gb = lb = hb = None
    if mode != MODE_VALUE:
        gb = get("bk.g", (n, dim, w_last))
        gb[:] = bar.bar_grad if bar.bar_grad is not None else 0.0
    if mode == MODE_LAP:
        lb = get("bk.l", (n, w_last))
        lb[:] = bar.bar_lap if bar.bar_lap is not None else 0.0
    if mode == MODE_HESS:
        hb = get("bk.h", (n, P, w_last))
        hb[:] = bar.bar_hess if bar.bar_hess is not None else 0.0

    for l in range(last, -1, -1):
        rec = stack.layers[l]
        W = params.weights[l]
        w_out = W.shape[0]

        if l == last:
            zb, gzb, lzb, hzb = ab, gb, lb, hb
        else:
            s, u, t = rec.s, rec.u, rec.t
            # z cotangent from a = tanh(z), g = s*gz, lap = u*q + s*lz, h = s*hz + u*gz gz
            zb = get(f"bk.z{l}", (n, w_out))
            np.multiply(ab, s, out=zb)
            if gb is not None:
                tmp = get(f"bk.tmp{l}", (n, w_out))
                np.einsum("nkw,nkw->nw", gb, rec.gz, out=tmp)
                tmp *= u
                zb += tmp
            uprime = get(f"bk.up{l}", (n, w_out))
            if lb is not None or hb is not None:
                # d(tanh'')/dz = s (6 t^2 - 2)
                np.multiply(t, t, out=uprime)
                uprime *= 6.0
                uprime -= 2.0
                uprime *= s
            if lb is not None:
                tmp = get(f"bk.tmp{l}", (n, w_out))
                np.multiply(uprime, rec.q, out=tmp)
                if rec.lz is not None:
                    tmp += u * rec.lz
                tmp *= lb
                zb += tmp
            if hb is not None:
                tmp = get(f"bk.tmp{l}", (n, w_out))
                outer = get(f"bk.outer{l}", (n, P, w_out))
                np.multiply(rec.gz[:, iu, :], rec.gz[:, il, :], out=outer)
                outer *= uprime[:, None, :]
                if rec.hz is not None:
                    ht = get(f"bk.ht{l}", (n, P, w_out))
                    np.multiply(rec.hz, u[:, None, :], out=ht)
                    outer += ht
                np.einsum("npw,npw->nw", hb, outer, out=tmp)
                zb += tmp

            gzb = None
            if gb is not None:
                gzb = get(f"bk.gz{l}", (n, dim, w_out))
                np.multiply(gb, s[:, None, :], out=gzb)
                if lb is not None:
                    # lap depends on gz through q = sum_k gz_k^2
                    t2 = get(f"bk.lg{l}", (n, w_out))
                    np.multiply(lb, u, out=t2)
                    t2 *= 2.0
                    gzb += t2[:, None, :] * rec.gz
                if hb is not None:
                    hu = get(f"bk.hu{l}", (n, P, w_out))
                    np.multiply(hb, u[:, None, :], out=hu)
                    for p, (k, m) in enumerate(pairs):
                        gzb[:, k, :] += hu[:, p, :] * rec.gz[:, m, :]
                        gzb[:, m, :] += hu[:, p, :] * rec.gz[:, k, :]
            lzb = None
            if lb is not None and rec.lz is not None:
                lzb = get(f"bk.lz{l}", (n, w_out))
                np.multiply(lb, s, out=lzb)
            hzb = None
            if hb is not None and rec.hz is not None:
                hzb = get(f"bk.hz{l}", (n, P, w_out))
                np.multiply(hb, s[:, None, :], out=hzb)

        # parameter gradients for this layer
        w_views[l] += zb.T @ rec.a_in
        b_views[l] += zb.sum(axis=0)
        if gzb is not None:
            if rec.g_in is None:
                # input spatial gradient is the identity: contract against it
                w_views[l] += gzb.sum(axis=0).T
            else:
                n_in = rec.g_in.shape[2]
                w_views[l] += gzb.reshape(n * dim, w_out).T @ rec.g_in.reshape(
                    n * dim, n_in
                )
        if lzb is not None and rec.l_in is not None:
            w_views[l] += lzb.T @ rec.l_in
        if hzb is not None and rec.h_in is not None:
            n_in = rec.h_in.shape[2]
            w_views[l] += hzb.reshape(n * P, w_out).T @ rec.h_in.reshape(n * P, n_in)

        if l == 0:
            break

        # pull cotangents through the affine map to the previous layer outputs
        n_in = W.shape[1]
        ab = get(f"bk.ap{l}", (n, n_in))
        np.dot(zb, W, out=ab)
        if gzb is not None:
            gb = get(f"bk.gp{l}", (n, dim, n_in))
            np.dot(gzb.reshape(n * dim, w_out), W, out=gb.reshape(n * dim, n_in))
        else:
            gb = None
        if lzb is not None:
            lb = get(f"bk.lp{l}", (n, n_in))
            np.dot(lzb, W, out=lb)
        else:
            lb = None
        if hzb is not None:
            hb = get(f"bk.hp{l}", (n, P, n_in))
            np.dot(hzb.reshape(n * P, w_out), W, out=hb.reshape(n * P, n_in))
        else:
            hb = None

    return out_grad


def _mode_for_order(order: int) -> str:
    if order == 1:
        return MODE_GRAD
    if order == 2:
        return MODE_HESS
    raise ValueError(f"order must be 1 or 2, got {order}")


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Network values; (out,) for a single point, (n, out) for a batch."""
    x2, single = _as_batch(x, params.in_dim)
    stack = forward_stack(params, x2, MODE_VALUE, keep=False)
    v = stack.out.value
    return v[0] if single else v


def jet(params: MlpParams, x: np.ndarray, order: int = 1) -> JetValue:
    """Value plus exact spatial derivatives at a single point."""
    mode = _mode_for_order(order)
    x2, single = _as_batch(x, params.in_dim)
    if not single and x2.shape[0] != 1:
        raise ValueError("jet evaluates a single point; use jet_batch for batches")
    stack = forward_stack(params, x2, mode, keep=False)
    jb = stack.out
    value = jb.value[0]
    grad_x = jb.grad[0].T.copy()  # (out, dim)
    hess_x = None
    if order == 2:
        hess_x = expand_packed_hess(jb.hess, jb.dim)[0]
    return JetValue(value=value, grad_x=grad_x, hess_x=hess_x)


def jet_batch(params: MlpParams, x: np.ndarray, mode: str = MODE_GRAD) -> JetBatch:
    """Batched jets in the internal layout; mode picks the derivative state."""
    x2, _ = _as_batch(x, params.in_dim)
    return forward_stack(params, x2, mode, keep=False).out


class PointwiseObjective:
    """Scalar objective of the form sum_n term(x_n, jet_n).

    `term(x, jets)` returns (per-point contributions (n,), JetCotangent with
    d(objective)/d(jet outputs)).  Parameter gradients are exact reverse-mode
    accumulation through the augmented forward pass.
    """

    def __init__(self, points: np.ndarray, mode: str, term):
        self.points = np.asarray(points, dtype=float)
        self.mode = mode
        self.term = term

    def value(self, params: MlpParams) -> float:
        stack = forward_stack(params, self.points, self.mode, keep=False)
        contrib, _ = self.term(self.points, stack.out)
        return float(np.sum(contrib))

    def value_and_gradient(self, params: MlpParams) -> tuple[float, np.ndarray]:
        stack = forward_stack(params, self.points, self.mode)
        contrib, bar = self.term(self.points, stack.out)
        grad = backward_stack(stack, bar)
        return float(np.sum(contrib)), grad


class ScaledSumObjective:
    """Linear combination sum_i c_i * objective_i."""

    def __init__(self, terms: list[tuple[float, object]]):
        self.terms = terms

    def value(self, params: MlpParams) -> float:
        return sum(c * obj.value(params) for c, obj in self.terms)

    def value_and_gradient(self, params: MlpParams) -> tuple[float, np.ndarray]:
        total = 0.0
        grad = np.zeros(params.n_params)
        for c, obj in self.terms:
            v, g = obj.value_and_gradient(params)
            total += c * v
            grad += c * g
        return total, grad


def param_gradient(objective, params: MlpParams) -> np.ndarray:
    """d(objective)/d(theta) as a flat vector in the flatten_params ordering.

    The objective must expose value_and_gradient(params); PointwiseObjective
    and the loss assemblers provide exact reverse-mode gradients for
    objectives composed of network evaluations and spatial derivatives.
    """
    if not hasattr(objective, "value_and_gradient"):
        raise TypeError(
            "objective must provide value_and_gradient(params); wrap pointwise "
            "terms in PointwiseObjective"
        )
    value, grad = objective.value_and_gradient(params)
    if not np.isfinite(value):
        raise FloatingPointError(f"objective evaluated to non-finite value {value!r}")
    return grad
