"""Deterministic tensor math: PCG32 randomness and a tape-based reverse-mode engine.

Everything downstream (schedule, networks, guidance, metrics) runs on plain
float64 numpy arrays produced here. Two hard requirements shape the module:
bit-identical results for identical inputs and Rng state on any platform, and
reverse-mode gradients over a small closed primitive set (no general autodiff).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


class NumericalError(RuntimeError):
    """A computation produced NaN/Inf where the contract forbids it."""


class ConfigError(ValueError):
    """Invalid or unknown configuration."""


def check_finite(arr, context=""):
    """Raise NumericalError if any element of arr is NaN/Inf."""
    a = np.asarray(arr)
    if not np.all(np.isfinite(a)):
        raise NumericalError(f"non-finite values in {context or 'array'}")
    return arr


def as_grid(data, shape=None):
    """Coerce to a finite float64 array (the FloatGrid carrier)."""
    a = np.asarray(data, dtype=np.float64)
    if shape is not None:
        a = a.reshape(shape)
    check_finite(a, "grid")
    return a


# ---------------------------------------------------------------------------
# PCG32 pseudo-random generator
# ---------------------------------------------------------------------------

_PCG_MULT = np.uint64(6364136223846793005)
_MASK64 = (1 << 64) - 1


class Rng:
    """PCG32 (XSH-RR) with 64-bit state and 64-bit stream selector.

    Uses the reference constants and seeding sequence, so draw sequences are
    reproducible bit-for-bit across platforms for a given (seed, stream).
    ``n_draws`` counts 32-bit outputs consumed; tests instrument it to verify
    stream positions.
    """

    def __init__(self, seed, stream=0):
        self.seed = int(seed)
        self.stream = int(stream)
        self.inc = ((self.stream << 1) | 1) & _MASK64
        self.state = 0
        self.n_draws = 0
        # reference srandom: step, add seed, step (outputs discarded)
        self._step()
        self.state = (self.state + self.seed) & _MASK64
        self._step()

    def _step(self):
        self.state = (self.state * 6364136223846793005 + self.inc) & _MASK64

    def clone(self):
        c = Rng.__new__(Rng)
        c.seed, c.stream, c.inc = self.seed, self.stream, self.inc
        c.state, c.n_draws = self.state, self.n_draws
        return c

    def next_uint32(self):
        old = self.state
        self._step()
        self.n_draws += 1
        xorshifted = (((old >> 18) ^ old) >> 27) & 0xFFFFFFFF
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & 0xFFFFFFFF

    def draw_uint32(self, n):
        """Vectorized batch of n successive PCG32 outputs (order preserved)."""
        if n <= 0:
            return np.empty(0, dtype=np.uint64)
        # state_k = A^k s0 + (sum_{j<k} A^j) inc, all mod 2^64 via uint64 wrap
        with np.errstate(over="ignore"):
            apow = np.empty(n + 1, dtype=np.uint64)
            apow[0] = 1
            apow[1:] = _PCG_MULT
            apow = np.multiply.accumulate(apow)
            geo = np.cumsum(apow[:n])  # geo[k] = sum_{j<=k} A^j
            olds = np.empty(n, dtype=np.uint64)
            olds[0] = np.uint64(self.state)
            if n > 1:
                olds[1:] = apow[1:n] * np.uint64(self.state) + geo[: n - 1] * np.uint64(self.inc)
            self.state = int(apow[n] * np.uint64(self.state) + geo[n - 1] * np.uint64(self.inc))
            self.n_draws += n
            xorshifted = (((olds >> np.uint64(18)) ^ olds) >> np.uint64(27)).astype(np.uint32)
            rot = (olds >> np.uint64(59)).astype(np.uint32)
            return (
                (xorshifted >> rot) | (xorshifted << ((np.uint32(32) - rot) & np.uint32(31)))
            ).astype(np.uint64)

    def uniform(self, n=None):
        """Uniforms in [0, 1): draw / 2^32. Scalar when n is None."""
        if n is None:
            return self.next_uint32() / 4294967296.0
        return self.draw_uint32(n).astype(np.float64) / 4294967296.0

    def randint(self, lo, hi):
        """Integer in [lo, hi). Modulo reduction; bias is negligible at toy ranges."""
        if hi <= lo:
            raise ValueError("empty range")
        return lo + self.next_uint32() % (hi - lo)

    def bernoulli(self, p):
        return self.uniform() < p


def gaussian(rng, shape):
    """I.i.d. standard normal grid via Box-Muller on the PCG32 stream.

    Consumes exactly two 32-bit draws per sample pair (2*ceil(n/2) total);
    an odd tail discards the second value of its pair.
    """
    shape = tuple(int(s) for s in (shape if np.iterable(shape) else (shape,)))
    if len(shape) == 0 or any(s <= 0 for s in shape):
        raise ValueError("shape must be non-empty with positive extents")
    n = int(np.prod(shape))
    pairs = (n + 1) // 2
    raw = rng.draw_uint32(2 * pairs).astype(np.float64)
    u1 = (raw[0::2] + 1.0) / 4294967296.0  # (0, 1], keeps log finite
    u2 = raw[1::2] / 4294967296.0  # [0, 1)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * math.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:n].reshape(shape)


def softmax_rows(x):
    """Numerically stable row softmax of a 2D array."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("softmax_rows expects a 2D matrix")
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Reverse-mode tape
# ---------------------------------------------------------------------------


class Var:
    """Value node on a Tape. Holds a float64 array; immutable by convention."""

    __slots__ = ("data", "tape")

    def __init__(self, data, tape):
        self.data = data
        self.tape = tape

    @property
    def shape(self):
        return self.data.shape

    def __add__(self, other):
        return self.tape.add(self, other)

    def __radd__(self, other):
        return self.tape.add(self, other)

    def __sub__(self, other):
        return self.tape.add(self, self.tape.mul(other, -1.0))

    def __rsub__(self, other):
        return self.tape.add(self.tape.mul(self, -1.0), other)

    def __mul__(self, other):
        return self.tape.mul(self, other)

    def __rmul__(self, other):
        return self.tape.mul(self, other)

    def __neg__(self):
        return self.tape.mul(self, -1.0)

    def __getitem__(self, key):
        return self.tape.slice(self, key)


def _data(x):
    return x.data if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _unbroadcast(grad, shape):
    """Sum grad down to `shape` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad.reshape(shape)


class Tape:
    """Records primal ops and their partial-derivative closures.

    Ops accept Var or plain array/scalar operands; only Var parents receive
    gradients. ``backward`` replays the record in reverse and returns a map
    from Var to gradient. The op set is fixed; no general broadcasting beyond
    what the networks here need (bias adds, scalar scaling).
    """

    def __init__(self):
        self._records = []  # (out Var, parent Vars, backward fn)

    def var(self, data):
        return Var(np.asarray(data, dtype=np.float64), self)

    def _emit(self, out_data, parents, backward):
        out = Var(out_data, self)
        tracked = [p for p in parents if isinstance(p, Var)]
        if tracked:
            self._records.append((out, parents, backward))
        return out

    # -- primitives --------------------------------------------------------

    def add(self, a, b):
        ad, bd = _data(a), _data(b)
        out = ad + bd

        def backward(g):
            return (
                _unbroadcast(g, ad.shape) if isinstance(a, Var) else None,
                _unbroadcast(g, bd.shape) if isinstance(b, Var) else None,
            )

        return self._emit(out, (a, b), backward)

    def mul(self, a, b):
        ad, bd = _data(a), _data(b)
        out = ad * bd

        def backward(g):
            ga = _unbroadcast(g * bd, ad.shape) if isinstance(a, Var) else None
            gb = _unbroadcast(g * ad, bd.shape) if isinstance(b, Var) else None
            return ga, gb

        return self._emit(out, (a, b), backward)

    def matmul(self, a, b):
        ad, bd = _data(a), _data(b)
        if ad.ndim != 2 or bd.ndim != 2 or ad.shape[1] != bd.shape[0]:
            raise ValueError(f"matmul shape mismatch: {ad.shape} @ {bd.shape}")
        out = ad @ bd

        def backward(g):
            ga = g @ bd.T if isinstance(a, Var) else None
            gb = ad.T @ g if isinstance(b, Var) else None
            return ga, gb

        return self._emit(out, (a, b), backward)

    def conv2d_3x3(self, x, w, b):
        """Same-padded 3x3 convolution: (Cin,H,W) x (Cout,Cin,3,3) + (Cout,)."""
        xd, wd, bd = _data(x), _data(w), _data(b)
        cin, h, wid = xd.shape
        cout = wd.shape[0]
        if wd.shape != (cout, cin, 3, 3) or bd.shape != (cout,):
            raise ValueError(f"conv2d_3x3 shape mismatch: x{xd.shape} w{wd.shape} b{bd.shape}")
        xp = np.pad(xd, ((0, 0), (1, 1), (1, 1)))
        win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
        cols = win.transpose(1, 2, 0, 3, 4).reshape(h * wid, cin * 9)
        flat = cols @ wd.reshape(cout, cin * 9).T + bd
        out = flat.T.reshape(cout, h, wid)

        def backward(g):
            gflat = g.reshape(cout, h * wid).T
            gx = gw = gb = None
            if isinstance(w, Var):
                gw = (gflat.T @ cols).reshape(wd.shape)
            if isinstance(b, Var):
                gb = g.sum(axis=(1, 2))
            if isinstance(x, Var):
                gcols = (gflat @ wd.reshape(cout, cin * 9)).reshape(h, wid, cin, 3, 3)
                gxp = np.zeros((cin, h + 2, wid + 2))
                for di in range(3):
                    for dj in range(3):
                        gxp[:, di : di + h, dj : dj + wid] += gcols[:, :, :, di, dj].transpose(2, 0, 1)
                gx = gxp[:, 1 : h + 1, 1 : wid + 1]
            return gx, gw, gb

        return self._emit(out, (x, w, b), backward)

    def relu(self, x):
        xd = _data(x)
        out = np.maximum(xd, 0.0)

        def backward(g):
            return ((g * (xd > 0.0)) if isinstance(x, Var) else None,)

        return self._emit(out, (x,), backward)

    def softmax_rows(self, x):
        """Row-wise softmax of a 2D matrix; rows sum to 1, entries positive."""
        xd = _data(x)
        out = softmax_rows(xd)

        def backward(g):
            if not isinstance(x, Var):
                return (None,)
            return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

        return self._emit(out, (x,), backward)

    def mean(self, x, axis=None):
        xd = _data(x)
        out = xd.mean(axis=axis)
        count = xd.size if axis is None else np.prod([xd.shape[a] for a in np.atleast_1d(axis)])

        def backward(g):
            if not isinstance(x, Var):
                return (None,)
            if axis is None:
                return (np.full(xd.shape, g / count),)
            ge = np.expand_dims(g, tuple(np.atleast_1d(axis)))
            return (np.broadcast_to(ge, xd.shape) / count,)

        return self._emit(np.asarray(out), (x,), backward)

    def cosine(self, a, b):
        """Cosine similarity of two flattened grids; zero norm maps to 0 (warned)."""
        ad, bd = _data(a).ravel(), _data(b).ravel()
        if ad.shape != bd.shape:
            raise ValueError("cosine shape mismatch")
        na, nb = np.sqrt(ad @ ad), np.sqrt(bd @ bd)
        if na == 0.0 or nb == 0.0:
            warnings.warn("cosine of zero-norm input, defined as 0", RuntimeWarning)

            def backward_zero(g):
                return (
                    np.zeros(_data(a).shape) if isinstance(a, Var) else None,
                    np.zeros(_data(b).shape) if isinstance(b, Var) else None,
                )

            return self._emit(np.asarray(0.0), (a, b), backward_zero)
        # clamp keeps identical inputs at exactly 1 despite rounding
        c = min(1.0, max(-1.0, float(ad @ bd) / (na * nb)))

        def backward(g):
            ga = gb = None
            if isinstance(a, Var):
                ga = (g * (bd / (na * nb) - c * ad / (na * na))).reshape(_data(a).shape)
            if isinstance(b, Var):
                gb = (g * (ad / (na * nb) - c * bd / (nb * nb))).reshape(_data(b).shape)
            return ga, gb

        return self._emit(np.asarray(c), (a, b), backward)

    def slice(self, x, key):
        """Basic (possibly strided) indexing; gradient scatters back."""
        xd = _data(x)
        out = xd[key].copy()

        def backward(g):
            if not isinstance(x, Var):
                return (None,)
            gx = np.zeros(xd.shape)
            gx[key] = g
            return (gx,)

        return self._emit(out, (x,), backward)

    def concat(self, parts, axis=0):
        datas = [_data(p) for p in parts]
        out = np.concatenate(datas, axis=axis)
        sizes = [d.shape[axis] for d in datas]

        def backward(g):
            grads = []
            ofs = 0
            for p, s in zip(parts, sizes):
                sl = [np.s_[:]] * g.ndim
                sl[axis] = np.s_[ofs : ofs + s]
                grads.append(g[tuple(sl)] if isinstance(p, Var) else None)
                ofs += s
            return tuple(grads)

        return self._emit(out, tuple(parts), backward)

    def transpose(self, x, axes=None):
        xd = _data(x)
        ax = tuple(range(xd.ndim))[::-1] if axes is None else tuple(axes)
        out = np.ascontiguousarray(xd.transpose(ax))
        inv = np.argsort(ax)

        def backward(g):
            return (g.transpose(inv) if isinstance(x, Var) else None,)

        return self._emit(out, (x,), backward)

    def reshape(self, x, shape):
        xd = _data(x)
        out = xd.reshape(shape)

        def backward(g):
            return (g.reshape(xd.shape) if isinstance(x, Var) else None,)

        return self._emit(out, (x,), backward)

    def upsample2(self, x):
        """Nearest-neighbour x2 on the last two axes."""
        xd = _data(x)
        out = xd.repeat(2, axis=-2).repeat(2, axis=-1)

        def backward(g):
            if not isinstance(x, Var):
                return (None,)
            s = g.shape
            return (g.reshape(*s[:-2], s[-2] // 2, 2, s[-1] // 2, 2).sum(axis=(-3, -1)),)

        return self._emit(out, (x,), backward)

    def l2_normalize_rows(self, x):
        """Rows scaled to unit norm; zero rows pass through as zeros."""
        xd = _data(x)
        if xd.ndim != 2:
            raise ValueError("l2_normalize_rows expects a 2D matrix")
        norms = np.sqrt((xd * xd).sum(axis=1, keepdims=True))
        safe = np.where(norms > 0.0, norms, 1.0)
        out = xd / safe

        def backward(g):
            if not isinstance(x, Var):
                return (None,)
            dot = (g * out).sum(axis=1, keepdims=True)
            return ((g - out * dot) / safe,)

        return self._emit(out, (x,), backward)

    def absval(self, x):
        """|x| as relu(x) + relu(-x); subgradient 0 at 0."""
        return self.add(self.relu(x), self.relu(self.mul(x, -1.0)))

    # -- backward ----------------------------------------------------------

    def backward(self, out):
        """Gradients of a scalar Var w.r.t. every Var on the tape."""
        od = _data(out)
        if od.size != 1:
            raise ValueError("backward expects a scalar output")
        grads = {id(out): np.ones(od.shape)}
        holder = {id(out): out}
        for node, parents, bwd in reversed(self._records):
            g = grads.get(id(node))
            if g is None:
                continue
            for p, pg in zip(parents, bwd(g)):
                if pg is None or not isinstance(p, Var):
                    continue
                k = id(p)
                if k in grads:
                    grads[k] = grads[k] + pg
                else:
                    grads[k] = pg
                    holder[k] = p
        return Gradients(grads, holder)


@dataclass
class Gradients:
    """Lookup of gradients produced by one backward pass."""

    _by_id: dict
    _vars: dict

    def get(self, var):
        return self._by_id.get(id(var))

    def __contains__(self, var):
        return id(var) in self._by_id


class SgdMomentum:
    """Plain SGD with momentum over named parameter arrays (updates in place)."""

    def __init__(self, lr=1e-3, momentum=0.9):
        self.lr = lr
        self.momentum = momentum
        self.velocity = {}

    def step(self, params, grads):
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            v = self.velocity.get(name)
            v = -self.lr * g if v is None else self.momentum * v - self.lr * g
            self.velocity[name] = v
            p += v


def grad_check(f, x, h=1e-4):
    """Max relative error between tape gradient of f and central differences.

    ``f(tape, x_var) -> scalar Var`` must be re-evaluable. Denominator is
    max(|analytic|, |numeric|, 1e-8) per coordinate.
    """
    if not (1e-5 <= h <= 1e-3):
        raise ValueError("h must lie in [1e-5, 1e-3]")
    x = np.asarray(x, dtype=np.float64)
    tape = Tape()
    xv = tape.var(x.copy())
    out = f(tape, xv)
    if not np.isfinite(_data(out)).all():
        raise NumericalError("non-finite function value in grad_check")
    analytic = tape.backward(out).get(xv)
    if analytic is None:
        analytic = np.zeros(x.shape)

    def feval(xarr):
        t = Tape()
        v = f(t, t.var(xarr))
        val = float(_data(v))
        if not math.isfinite(val):
            raise NumericalError("non-finite function value in grad_check")
        return val

    worst = 0.0
    flat = x.ravel()
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += h
        xm[i] -= h
        num = (feval(xp.reshape(x.shape)) - feval(xm.reshape(x.shape))) / (2 * h)
        ana = analytic.ravel()[i]
        rel = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
        worst = max(worst, rel)
    return worst
