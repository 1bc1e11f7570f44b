"""Composable covariance functions with analytic log-space gradients.

Kernels form small expression trees over five leaves (constant, RBF, Matérn,
rational quadratic, white noise) combined by ``+`` and ``*``.  Gram matrices
distinguish same-set assembly (white noise lands on the diagonal) from
cross-set assembly (white noise contributes nothing): two distinct survey
passes over the same location must not share a noise term, so identity is
by index, never by coordinates.

Every leaf parameter is a positive :class:`HyperParam` optimized in natural
log space; ``gradients`` returns one dK/d(log theta) matrix per free
parameter so the marginal-likelihood optimizer can run quasi-Newton steps.

The text form round-trips through :func:`parse_kernel` /
:func:`format_kernel`, e.g. ``const(4.0) * matern(l=1.0,nu=1.5) + white(0.25)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist

DEFAULT_AMPLITUDE_BOUNDS = (1e-3, 1e3)
DEFAULT_LENGTH_BOUNDS = (1e-2, 1e2)
DEFAULT_NOISE_BOUNDS = (1e-6, 1e2)
DEFAULT_ALPHA_BOUNDS = (1e-3, 1e3)

MATERN_NU_VALUES = (0.5, 1.5, 2.5)


@dataclass(frozen=True)
class HyperParam:
    """Positive scalar with log-space optimization bounds.

    A parameter with ``lower == upper`` is fixed and excluded from the
    optimizer's search space.
    """

    value: float
    lower: float
    upper: float

    def __post_init__(self):
        if not (0.0 < self.lower <= self.value <= self.upper):
            raise ValueError(
                f"require 0 < lower <= value <= upper, got "
                f"({self.lower}, {self.value}, {self.upper})"
            )

    @property
    def fixed(self) -> bool:
        return self.lower == self.upper

    def with_value(self, value: float) -> "HyperParam":
        """New parameter at ``value`` clamped into the bounds (optimizers can
        overshoot the box by a few ulp)."""
        return replace(self, value=min(max(float(value), self.lower), self.upper))


def _param(value, bounds, name) -> HyperParam:
    value = float(value)
    if value <= 0.0:
        raise ValueError(f"{name} must be positive, got {value}")
    lo, hi = bounds
    return HyperParam(value, min(lo, value), max(hi, value))


class Kernel:
    """Base covariance expression node."""

    def gram(self, X: np.ndarray, Y: np.ndarray | None = None) -> np.ndarray:
        """Covariance matrix.  ``Y=None`` means same-set assembly: white
        noise contributes on the diagonal only.  With ``Y`` given the sets
        are treated as disjoint and white noise contributes nothing."""
        raise NotImplementedError

    def diag(self, X: np.ndarray, include_noise: bool = True) -> np.ndarray:
        """Diagonal of the same-set Gram; ``include_noise=False`` gives the
        noise-free prior variance used for posterior prediction."""
        raise NotImplementedError

    def gradients(self, X: np.ndarray) -> list[np.ndarray]:
        """One dK/d(log theta) same-set matrix per free hyperparameter,
        ordered like :meth:`free_params`."""
        raise NotImplementedError

    def params(self) -> list[HyperParam]:
        """All hyperparameters in stable tree order."""
        raise NotImplementedError

    def with_params(self, values) -> "Kernel":
        """New kernel with all hyperparameter values replaced, tree order."""
        new, rest = self._rebuild(list(values))
        if rest:
            raise ValueError(f"{len(rest)} unused parameter values")
        return new

    def _rebuild(self, values: list[float]):
        raise NotImplementedError

    # log-space views over free (non-fixed) parameters

    def free_params(self) -> list[HyperParam]:
        return [p for p in self.params() if not p.fixed]

    @property
    def theta(self) -> np.ndarray:
        return np.log([p.value for p in self.free_params()])

    @property
    def theta_bounds(self) -> list[tuple[float, float]]:
        return [(math.log(p.lower), math.log(p.upper)) for p in self.free_params()]

    def with_theta(self, theta: np.ndarray) -> "Kernel":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (len(self.free_params()),):
            raise ValueError(f"expected {len(self.free_params())} values, got {theta.shape}")
        it = iter(np.exp(theta))
        values = [p.value if p.fixed else next(it) for p in self.params()]
        return self.with_params(values)

    def value(self, x: np.ndarray, y: np.ndarray, same_index: bool = False) -> float:
        """Scalar k(x, y).  ``same_index`` marks x and y as the same sample,
        which is when white noise applies."""
        x = np.asarray(x, dtype=float).reshape(1, -1)
        y = np.asarray(y, dtype=float).reshape(1, -1)
        if x.shape != y.shape:
            raise ValueError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
        if same_index:
            return float(self.diag(x)[0])
        return float(self.gram(x, y)[0, 0])

    def __add__(self, other: "Kernel") -> "Kernel":
        return SumKernel(self, other)

    def __mul__(self, other: "Kernel") -> "Kernel":
        return ProductKernel(self, other)

    def __repr__(self):
        return f"{type(self).__name__}({format_kernel(self)!r})"

    def __str__(self):
        return format_kernel(self)


def _check_dims(X, Y):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("features must be a 2-D array")
    if Y is None:
        return X, None
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != X.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape} vs {Y.shape}")
    return X, Y


class ConstantKernel(Kernel):
    """k(x, x') = c."""

    def __init__(self, constant: float = 1.0, bounds=DEFAULT_AMPLITUDE_BOUNDS):
        self.constant = _param(constant, bounds, "constant")

    def gram(self, X, Y=None):
        X, Y = _check_dims(X, Y)
        m = X.shape[0] if Y is None else Y.shape[0]
        return np.full((X.shape[0], m), self.constant.value)

    def diag(self, X, include_noise=True):
        X, _ = _check_dims(X, None)
        return np.full(X.shape[0], self.constant.value)

    def gradients(self, X):
        if self.constant.fixed:
            return []
        return [self.gram(X)]  # d(c)/d(log c) = c

    def params(self):
        return [self.constant]

    def _rebuild(self, values):
        new = ConstantKernel.__new__(ConstantKernel)
        new.constant = self.constant.with_value(values[0])
        return new, values[1:]


class RBFKernel(Kernel):
    """k(x, x') = exp(-d^2 / (2 l^2))."""

    def __init__(self, length: float = 1.0, bounds=DEFAULT_LENGTH_BOUNDS):
        self.length = _param(length, bounds, "length")

    def _k(self, d):
        return np.exp(-0.5 * (d / self.length.value) ** 2)

    def gram(self, X, Y=None):
        X, Y = _check_dims(X, Y)
        d = cdist(X, X if Y is None else Y)
        return self._k(d)

    def diag(self, X, include_noise=True):
        X, _ = _check_dims(X, None)
        return np.ones(X.shape[0])

    def gradients(self, X):
        if self.length.fixed:
            return []
        d = cdist(X, X)
        return [self._k(d) * (d / self.length.value) ** 2]

    def params(self):
        return [self.length]

    def _rebuild(self, values):
        new = RBFKernel.__new__(RBFKernel)
        new.length = self.length.with_value(values[0])
        return new, values[1:]


class MaternKernel(Kernel):
    """Matérn covariance at the closed-form orders nu in {0.5, 1.5, 2.5}.

    nu is a structural choice, not an optimizable hyperparameter.
    """

    def __init__(self, length: float = 1.0, nu: float = 1.5, bounds=DEFAULT_LENGTH_BOUNDS):
        if nu not in MATERN_NU_VALUES:
            raise ValueError(f"nu must be one of {MATERN_NU_VALUES}, got {nu}")
        self.length = _param(length, bounds, "length")
        self.nu = float(nu)

    def _k(self, d):
        if self.nu == 0.5:
            return np.exp(-d / self.length.value)
        if self.nu == 1.5:
            s = math.sqrt(3.0) * d / self.length.value
            return (1.0 + s) * np.exp(-s)
        s = math.sqrt(5.0) * d / self.length.value
        return (1.0 + s + s * s / 3.0) * np.exp(-s)

    def gram(self, X, Y=None):
        X, Y = _check_dims(X, Y)
        return self._k(cdist(X, X if Y is None else Y))

    def diag(self, X, include_noise=True):
        X, _ = _check_dims(X, None)
        return np.ones(X.shape[0])

    def gradients(self, X):
        if self.length.fixed:
            return []
        d = cdist(X, X)
        if self.nu == 0.5:
            s = d / self.length.value
            g = s * np.exp(-s)
        elif self.nu == 1.5:
            s = math.sqrt(3.0) * d / self.length.value
            g = s * s * np.exp(-s)
        else:
            s = math.sqrt(5.0) * d / self.length.value
            g = s * s * (1.0 + s) / 3.0 * np.exp(-s)
        return [g]

    def params(self):
        return [self.length]

    def _rebuild(self, values):
        new = MaternKernel.__new__(MaternKernel)
        new.length = self.length.with_value(values[0])
        new.nu = self.nu
        return new, values[1:]


class RationalQuadraticKernel(Kernel):
    """k(x, x') = (1 + d^2 / (2 alpha l^2))^(-alpha)."""

    def __init__(self, length: float = 1.0, alpha: float = 1.0,
                 length_bounds=DEFAULT_LENGTH_BOUNDS, alpha_bounds=DEFAULT_ALPHA_BOUNDS):
        self.length = _param(length, length_bounds, "length")
        self.alpha = _param(alpha, alpha_bounds, "alpha")

    def _base(self, d):
        return 1.0 + d * d / (2.0 * self.alpha.value * self.length.value ** 2)

    def gram(self, X, Y=None):
        X, Y = _check_dims(X, Y)
        return self._base(cdist(X, X if Y is None else Y)) ** (-self.alpha.value)

    def diag(self, X, include_noise=True):
        X, _ = _check_dims(X, None)
        return np.ones(X.shape[0])

    def gradients(self, X):
        grads = []
        d = cdist(X, X)
        base = self._base(d)
        alpha = self.alpha.value
        if not self.length.fixed:
            grads.append(base ** (-alpha - 1.0) * (d / self.length.value) ** 2)
        if not self.alpha.fixed:
            u = d * d / (2.0 * alpha * self.length.value ** 2)
            k = base ** (-alpha)
            grads.append(k * alpha * (u / base - np.log(base)))
        return grads

    def params(self):
        return [self.length, self.alpha]

    def _rebuild(self, values):
        new = RationalQuadraticKernel.__new__(RationalQuadraticKernel)
        new.length = self.length.with_value(values[0])
        new.alpha = self.alpha.with_value(values[1])
        return new, values[2:]


class WhiteNoiseKernel(Kernel):
    """Independent noise: sigma_n^2 on the diagonal of same-set Grams only."""

    def __init__(self, noise_var: float = 0.1, bounds=DEFAULT_NOISE_BOUNDS):
        self.noise_var = _param(noise_var, bounds, "noise_var")

    def gram(self, X, Y=None):
        X, Y = _check_dims(X, Y)
        if Y is None:
            return self.noise_var.value * np.eye(X.shape[0])
        return np.zeros((X.shape[0], Y.shape[0]))

    def diag(self, X, include_noise=True):
        X, _ = _check_dims(X, None)
        if include_noise:
            return np.full(X.shape[0], self.noise_var.value)
        return np.zeros(X.shape[0])

    def gradients(self, X):
        if self.noise_var.fixed:
            return []
        return [self.noise_var.value * np.eye(np.asarray(X).shape[0])]

    def params(self):
        return [self.noise_var]

    def _rebuild(self, values):
        new = WhiteNoiseKernel.__new__(WhiteNoiseKernel)
        new.noise_var = self.noise_var.with_value(values[0])
        return new, values[1:]


class SumKernel(Kernel):
    def __init__(self, left: Kernel, right: Kernel):
        self.left = left
        self.right = right

    def gram(self, X, Y=None):
        return self.left.gram(X, Y) + self.right.gram(X, Y)

    def diag(self, X, include_noise=True):
        return self.left.diag(X, include_noise) + self.right.diag(X, include_noise)

    def gradients(self, X):
        return self.left.gradients(X) + self.right.gradients(X)

    def params(self):
        return self.left.params() + self.right.params()

    def _rebuild(self, values):
        left, values = self.left._rebuild(values)
        right, values = self.right._rebuild(values)
        return SumKernel(left, right), values


class ProductKernel(Kernel):
    def __init__(self, left: Kernel, right: Kernel):
        self.left = left
        self.right = right

    def gram(self, X, Y=None):
        return self.left.gram(X, Y) * self.right.gram(X, Y)

    def diag(self, X, include_noise=True):
        return self.left.diag(X, include_noise) * self.right.diag(X, include_noise)

    def gradients(self, X):
        gl = self.left.gram(X)
        gr = self.right.gram(X)
        return [g * gr for g in self.left.gradients(X)] + [gl * g for g in self.right.gradients(X)]

    def params(self):
        return self.left.params() + self.right.params()

    def _rebuild(self, values):
        left, values = self.left._rebuild(values)
        right, values = self.right._rebuild(values)
        return ProductKernel(left, right), values


def gram_matrix(kernel: Kernel, X, Y=None, same_set: bool | None = None) -> np.ndarray:
    """Gram assembly helper.  ``same_set`` defaults to ``Y is None``; passing
    ``same_set=True`` with an explicit Y equal to X restores diagonal noise."""
    if same_set is None:
        same_set = Y is None
    return kernel.gram(X, None if same_set else (X if Y is None else Y))


def gram_diag(kernel: Kernel, X, include_noise: bool = True) -> np.ndarray:
    return kernel.diag(X, include_noise)


def kernel_eval(kernel: Kernel, x, y, same_index: bool = False) -> float:
    return kernel.value(x, y, same_index)


def composite_kernel(constant: float = 1.0, length: float = 1.0, nu: float = 1.5,
                     noise_var: float = 0.1,
                     constant_bounds=DEFAULT_AMPLITUDE_BOUNDS,
                     length_bounds=DEFAULT_LENGTH_BOUNDS,
                     noise_bounds=DEFAULT_NOISE_BOUNDS) -> Kernel:
    """The default composite: const * matern(nu) + white."""
    return (ConstantKernel(constant, constant_bounds)
            * MaternKernel(length, nu, length_bounds)
            + WhiteNoiseKernel(noise_var, noise_bounds))


def table2_kernels(constant: float = 1.0, length: float = 1.0, nu: float = 1.5,
                   alpha: float = 1.0, noise_var: float = 0.1) -> dict[str, Kernel]:
    """The 12 ablation kernels: {rbf, rq, matern} x {bare, +wn, const*, const*+wn}."""

    def base(name):
        if name == "rbf":
            return RBFKernel(length)
        if name == "rq":
            return RationalQuadraticKernel(length, alpha)
        return MaternKernel(length, nu)

    out: dict[str, Kernel] = {}
    for name in ("rbf", "rq", "matern"):
        out[f"{name}+wn"] = base(name) + WhiteNoiseKernel(noise_var)
        out[name] = base(name)
        out[f"const*{name}"] = ConstantKernel(constant) * base(name)
        out[f"const*{name}+wn"] = ConstantKernel(constant) * base(name) + WhiteNoiseKernel(noise_var)
    return out


# ---------------------------------------------------------------------------
# text form


def format_kernel(kernel: Kernel) -> str:
    if isinstance(kernel, SumKernel):
        return f"{format_kernel(kernel.left)} + {format_kernel(kernel.right)}"
    if isinstance(kernel, ProductKernel):
        left = format_kernel(kernel.left)
        right = format_kernel(kernel.right)
        if isinstance(kernel.left, SumKernel):
            left = f"({left})"
        if isinstance(kernel.right, SumKernel):
            right = f"({right})"
        return f"{left} * {right}"
    if isinstance(kernel, ConstantKernel):
        return f"const({kernel.constant.value!r})"
    if isinstance(kernel, RBFKernel):
        return f"rbf(l={kernel.length.value!r})"
    if isinstance(kernel, MaternKernel):
        return f"matern(l={kernel.length.value!r},nu={kernel.nu!r})"
    if isinstance(kernel, RationalQuadraticKernel):
        return f"rq(l={kernel.length.value!r},alpha={kernel.alpha.value!r})"
    if isinstance(kernel, WhiteNoiseKernel):
        return f"white({kernel.noise_var.value!r})"
    raise TypeError(f"unknown kernel node {type(kernel).__name__}")


_LEAF_RE = re.compile(r"^(const|rbf|matern|rq|white)\((.*)\)$")


def _parse_leaf(text: str) -> Kernel:
    m = _LEAF_RE.match(text.strip())
    if not m:
        raise ValueError(f"cannot parse kernel term {text!r}")
    name, argtext = m.groups()
    args: dict[str, float] = {}
    positional: list[float] = []
    if argtext.strip():
        for piece in argtext.split(","):
            piece = piece.strip()
            if "=" in piece:
                key, val = piece.split("=", 1)
                args[key.strip()] = float(val)
            else:
                positional.append(float(piece))
    try:
        if name == "const":
            (c,) = positional or (args.pop("c"),)
            return ConstantKernel(c)
        if name == "white":
            (v,) = positional or (args.pop("s2"),)
            return WhiteNoiseKernel(v)
        if name == "rbf":
            return RBFKernel(args.pop("l") if "l" in args else positional[0])
        if name == "matern":
            length = args.pop("l") if "l" in args else positional[0]
            return MaternKernel(length, args.pop("nu", 1.5))
        length = args.pop("l") if "l" in args else positional[0]
        return RationalQuadraticKernel(length, args.pop("alpha", 1.0))
    except (IndexError, KeyError):
        raise ValueError(f"bad arguments in kernel term {text!r}") from None


def _split_top(text: str, sep: str) -> list[str]:
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ValueError(f"unbalanced parentheses in {text!r}")
        elif ch == sep and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    if depth != 0:
        raise ValueError(f"unbalanced parentheses in {text!r}")
    parts.append(text[start:])
    return parts


def parse_kernel(text: str) -> Kernel:
    """Parse the canonical text form; '*' binds tighter than '+'.

    Parsed parameters get the default bounds.
    """

    def parse_expr(expr: str) -> Kernel:
        terms = [parse_term(t) for t in _split_top(expr, "+")]
        node = terms[0]
        for t in terms[1:]:
            node = SumKernel(node, t)
        return node

    def parse_term(term: str) -> Kernel:
        factors = [parse_factor(f) for f in _split_top(term, "*")]
        node = factors[0]
        for f in factors[1:]:
            node = ProductKernel(node, f)
        return node

    def parse_factor(factor: str) -> Kernel:
        factor = factor.strip()
        if not factor:
            raise ValueError("empty kernel term")
        if factor.startswith("(") and factor.endswith(")") and _balanced(factor[1:-1]):
            return parse_expr(factor[1:-1])
        return _parse_leaf(factor)

    def _balanced(s: str) -> bool:
        depth = 0
        for ch in s:
            depth += ch == "("
            depth -= ch == ")"
            if depth < 0:
                return False
        return depth == 0

    return parse_expr(text.strip())
