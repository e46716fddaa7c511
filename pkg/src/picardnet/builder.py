"""Mechanical construction of ReLU networks that replay frozen estimates.

Three builders live here: per-step time-recursion networks, Euler-path
networks, and the full multilevel Picard network whose realization equals
the recursive estimator pointwise under the same frozen sample.  The
builders never store raw noise; they re-derive every draw from the keyed
substreams, which is what guarantees agreement with the simulator.

Architecture accounting is exact: ``predict_architecture`` computes the
resulting width vector symbolically with the same composition/sum/padding
algebra the builders use, so built shape equals predicted shape as an
integer identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .indexrng import FrozenSample, IndexPath, child, uniform_time
from .nets import (
    Architecture,
    NetworkError,
    ReluNetwork,
    affine_network,
    architecture,
    compose,
    compose_architecture,
    extend_architecture,
    extend_depth,
    identity_architecture,
    identity_network,
    max_width,
    param_count_of,
    sum_architecture,
    sum_networks,
    zero_network,
)
from .sde import TimeGrid, effective_breakpoints
from .indexrng import brownian_path

PARAM_GUARD = 100_000_000


class BuildSizeError(RuntimeError):
    """A requested build would exceed the dense-parameter guard."""

    def __init__(self, predicted_params: int, depth: int, width: int):
        self.report = {
            "predicted_params": int(predicted_params),
            "guard": PARAM_GUARD,
            "depth": int(depth),
            "max_width": int(width),
        }
        super().__init__(
            f"build rejected: {predicted_params} dense parameters exceed guard {PARAM_GUARD} "
            f"(depth {depth}, max width {width})"
        )


@dataclass(frozen=True)
class SigmaNetworkFamily:
    """Direction-indexed diffusion networks x -> sigma(x) v.

    Every produced network must share one reference architecture, so the
    shapes of everything built on top are direction-independent.
    """

    input_dim: int
    reference_architecture: Architecture
    factory: Callable[[np.ndarray], ReluNetwork]

    def __call__(self, v) -> ReluNetwork:
        net = self.factory(np.asarray(v, dtype=np.float64))
        if architecture(net) != self.reference_architecture:
            raise NetworkError(
                f"sigma family produced architecture {architecture(net)}, "
                f"expected {self.reference_architecture}"
            )
        return net


def sigma_family_constant(d: int, matrix) -> SigmaNetworkFamily:
    """Family for constant diffusion sigma(x) = S: realizes x -> S v."""
    s = np.asarray(matrix, dtype=np.float64).reshape(d, d)
    ref = affine_network(np.zeros((d, d)), s @ np.zeros(d))
    return SigmaNetworkFamily(
        d, architecture(ref), lambda v: affine_network(np.zeros((d, d)), s @ v)
    )


def sigma_family_linear(d: int, coefficient_maps) -> SigmaNetworkFamily:
    """Family for sigma(x) linear in x: sigma(x) = sum_k x_k C_k.

    Then sigma(x) v = W(v) x with column k of W(v) equal to C_k v, an
    affine map of x for every direction, so the architecture is shared.
    """
    mats = [np.asarray(c, dtype=np.float64).reshape(d, d) for c in coefficient_maps]
    if len(mats) != d:
        raise NetworkError("need one coefficient matrix per coordinate")

    def factory(v: np.ndarray) -> ReluNetwork:
        w = np.column_stack([c @ v for c in mats])
        return affine_network(w, np.zeros(d))

    ref = factory(np.zeros(d))
    return SigmaNetworkFamily(d, architecture(ref), factory)


def sigma_family_zero(d: int) -> SigmaNetworkFamily:
    return sigma_family_constant(d, np.zeros((d, d)))


@dataclass(frozen=True)
class ProblemNetworks:
    """Coefficient encodings (mu, sigma family, f, g) plus their measured
    sup-deviation delta on the reported box."""

    mu: ReluNetwork
    sigma: SigmaNetworkFamily
    f: ReluNetwork
    g: ReluNetwork
    delta: float = 0.0
    box_radius: float = 0.0


# ---------------------------------------------------------------------------
# time-recursion networks
# ---------------------------------------------------------------------------

def _clip(s: float, lo: float, hi: float) -> float:
    return min(max(s, lo), hi)


def build_recursion_network(
    sigma_family: SigmaNetworkFamily,
    taus: Sequence[float],
    noise_values: Sequence,
    noise_at_query,
    s: float,
) -> ReluNetwork:
    """Network for the recursion g_s(x) = g_floor(x) + sigma(g_floor(x)) * df.

    ``noise_values[k]`` is the driving function at tau_k and
    ``noise_at_query`` its value at the query time s.  Step k contributes
    x -> x + sigma(x)[f((s v tau_{k-1}) ^ tau_k) - f(tau_{k-1})], realized
    as the parallel sum of an identity tower and a direction network, and
    the K steps compose.  Steps beyond s carry a zero direction, so the
    architecture never depends on s.
    """
    taus = [float(v) for v in taus]
    if len(taus) < 2:
        raise NetworkError("need at least one grid step")
    if any(b < a for a, b in zip(taus, taus[1:])):
        raise NetworkError("grid times must be nondecreasing")
    values = [np.asarray(v, dtype=np.float64) for v in noise_values]
    if len(values) != len(taus):
        raise NetworkError("need one noise value per grid time")
    query_value = np.asarray(noise_at_query, dtype=np.float64)
    d = sigma_family.input_dim
    depth = len(sigma_family.reference_architecture)

    def value_at(time: float, k: int) -> np.ndarray:
        if time == taus[k - 1]:
            return values[k - 1]
        if time == taus[k]:
            return values[k]
        return query_value

    result = None
    for k in range(1, len(taus)):
        cut = _clip(s, taus[k - 1], taus[k])
        delta = value_at(cut, k) - values[k - 1]
        step = sum_networks(
            [1.0, 1.0], [identity_network(d, depth), sigma_family(delta)]
        )
        result = step if result is None else compose(step, result)
    return result


def recursion_architecture(sigma_arch: Architecture, d: int, steps: int) -> Architecture:
    bracket = sum_architecture([identity_architecture(d, len(sigma_arch)), sigma_arch])
    arch = bracket
    for _ in range(steps - 1):
        arch = compose_architecture(bracket, arch)
    return arch


# ---------------------------------------------------------------------------
# Euler networks
# ---------------------------------------------------------------------------

def euler_architecture(mu_arch: Architecture, sigma_arch: Architecture,
                       d: int, steps: int) -> Architecture:
    depth = max(len(mu_arch), len(sigma_arch))
    bracket = sum_architecture(
        [
            identity_architecture(d, depth),
            extend_architecture(mu_arch, depth),
            extend_architecture(sigma_arch, depth),
        ]
    )
    arch = bracket
    for _ in range(steps - 1):
        arch = compose_architecture(bracket, arch)
    return arch


def build_euler_network(
    mu_net: ReluNetwork,
    sigma_family: SigmaNetworkFamily,
    grid: TimeGrid,
    sample: FrozenSample,
    path: IndexPath,
    t: float,
    s: float,
) -> ReluNetwork:
    """Network realizing x -> Euler state at s started from (t, x).

    The Brownian draws are re-derived from the same substream and
    breakpoints the simulator uses, then baked into step weights as
    x -> x + dt * mu(x) + sigma(x) dW.  Each of the K grid intervals
    contributes one step regardless of (t, s): intervals outside [t, s]
    get a zero increment, so the architecture is (t, s, theta)-invariant
    with depth K * (max coefficient depth - 1) + 1.
    """
    if not t <= s <= grid.horizon:
        raise NetworkError(f"need t <= s <= horizon, got t={t}, s={s}")
    d = sigma_family.input_dim
    if mu_net.input_dim != d or mu_net.output_dim != d:
        raise NetworkError("drift network must map R^d -> R^d")
    depth = max(mu_net.depth, len(sigma_family.reference_architecture))
    mu_ext = extend_depth(mu_net, depth)

    breakpoints = effective_breakpoints(grid, t, s)
    noise = brownian_path(sample, path, d, breakpoints)
    w_at = {breakpoints[0]: np.zeros(d)}
    acc = np.zeros(d)
    for i in range(len(breakpoints) - 1):
        acc = acc + noise.increments[i]
        w_at[breakpoints[i + 1]] = acc

    result = None
    for k in range(1, len(grid.points)):
        lo = max(grid.points[k - 1], t)
        hi = _clip(s, lo, max(grid.points[k], t))
        dt = hi - lo
        dw = w_at[hi] - w_at[lo] if dt > 0.0 else np.zeros(d)
        step = sum_networks(
            [1.0, dt, 1.0],
            [
                identity_network(d, depth),
                mu_ext,
                extend_depth(sigma_family(dw), depth),
            ],
        )
        result = step if result is None else compose(step, result)
    return result


# ---------------------------------------------------------------------------
# architecture prediction
# ---------------------------------------------------------------------------

def mlp_depth_identity(n: int, steps: int, mu_depth: int, sigma_depth: int,
                       f_depth: int, g_depth: int) -> int:
    """Exact depth of the built level-n network.

    With Y = steps * (max coefficient depth - 1) + 1 the identity reads
    n*(f_depth - 2) + (n + 1)*Y + g_depth - 1; the padding towers are
    chosen so every summand lands on this common value.
    """
    y = steps * (max(mu_depth, sigma_depth) - 1) + 1
    return n * (f_depth - 2) + (n + 1) * y + g_depth - 1


@dataclass(frozen=True)
class ArchitecturePrediction:
    """Exact predicted shape plus the closed-form growth bounds."""

    architecture: Architecture
    depth: int
    width: int
    param_count: int
    width_constant: int
    width_bound: int
    param_bound: int

    def satisfied_by(self, arch: Architecture) -> bool:
        return tuple(arch) == self.architecture


def _scale_hidden(arch: Architecture, count: int) -> Architecture:
    """Architecture of the parallel sum of ``count`` copies of ``arch``."""
    return (arch[0], *[count * w for w in arch[1:-1]], arch[-1])


def _sum_shared(archs: Sequence[Architecture]) -> Architecture:
    hidden = [sum(a[i] for a in archs) for i in range(1, len(archs[0]) - 1)]
    return (archs[0][0], *hidden, archs[0][-1])


def predict_architecture(
    mu_arch: Architecture,
    sigma_arch: Architecture,
    f_arch: Architecture,
    g_arch: Architecture,
    n: int,
    M: int,
    steps: int,
    d: int,
) -> ArchitecturePrediction:
    """Symbolic replay of the level-n build: exact architecture and bounds.

    The width bound is c_eff * (3M)^n where c_eff majorizes every block
    the construction stacks: the scalar glue (2), f and g widths, the 2d
    glue at state-dimension junctions, and the Euler step bracket whose
    hidden widths are the SUM 2d + w_mu + w_sigma of its three branches.
    """
    y_arch = euler_architecture(mu_arch, sigma_arch, d, steps)
    y_depth = len(y_arch)
    f_depth, g_depth = len(f_arch), len(g_arch)

    def pad_arch(length: int) -> Architecture:
        return identity_architecture(1, length)

    memo: dict[int, Architecture] = {}

    def level_arch(level: int) -> Architecture:
        if level in memo:
            return memo[level]
        if level == 0:
            arch = (d,) + (1,) * (y_depth + g_depth - 3) + (1,)
        else:
            groups: list[tuple[Architecture, int]] = []
            terminal = compose_architecture(
                pad_arch(level * (f_depth - 2 + y_depth) + 1),
                compose_architecture(g_arch, y_arch),
            )
            groups.append((terminal, M**level))
            for l in range(level):
                core = compose_architecture(level_arch(l), y_arch)
                if l <= level - 2:
                    core = compose_architecture(
                        pad_arch((level - 1 - l) * (f_depth - 2 + y_depth) + 1), core
                    )
                groups.append((compose_architecture(f_arch, core), M ** (level - l)))
                if l >= 1:
                    prev = compose_architecture(
                        pad_arch((level - l) * (f_depth - 2 + y_depth) + 1),
                        compose_architecture(level_arch(l - 1), y_arch),
                    )
                    groups.append((compose_architecture(f_arch, prev), M ** (level - l)))
            arch = _sum_shared([_scale_hidden(a, count) for a, count in groups])
        memo[level] = arch
        return arch

    arch = level_arch(n)
    depth = max(len(mu_arch), len(sigma_arch))
    bracket = sum_architecture(
        [
            identity_architecture(d, depth),
            extend_architecture(mu_arch, depth),
            extend_architecture(sigma_arch, depth),
        ]
    )
    c_eff = max(2, 2 * d, max_width(f_arch), max_width(g_arch), max_width(bracket))
    width_bound = c_eff * (3 * M) ** n
    expected_depth = mlp_depth_identity(n, steps, len(mu_arch), len(sigma_arch),
                                        f_depth, g_depth)
    assert len(arch) == expected_depth
    return ArchitecturePrediction(
        architecture=arch,
        depth=len(arch),
        width=max_width(arch),
        param_count=param_count_of(arch),
        width_constant=c_eff,
        width_bound=width_bound,
        param_bound=len(arch) * width_bound * (width_bound + 1),
    )


# ---------------------------------------------------------------------------
# multilevel Picard networks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BuiltMlpNetwork:
    """A built network, its randomness provenance and its predicted shape."""

    network: ReluNetwork
    provenance: dict
    prediction: ArchitecturePrediction

    def provenance_json(self) -> dict:
        return dict(self.provenance)


def build_mlp_network(networks: ProblemNetworks, config, path: IndexPath,
                      t: float) -> BuiltMlpNetwork:
    """Construct the level-n network whose realization equals the frozen
    multilevel Picard estimate at every x.

    Follows the inductive assembly: terminal g-parts and correction
    f-parts are each composed with an Euler network re-deriving the same
    draws the estimator consumed, padded by identity towers onto a common
    depth, and merged by one parallel sum with coefficients
    1/M^n and +/-(T-t)/M^(n-l).  Builds whose predicted dense parameter
    count exceeds the guard are rejected up front with a size report.
    """
    n, M = config.n, config.M
    grid: TimeGrid = config.grid
    sample: FrozenSample = config.sample
    d = networks.sigma.input_dim
    T = grid.horizon
    if not 0.0 <= t <= T:
        raise NetworkError(f"start time {t} outside [0, {T}]")
    if networks.g.input_dim != d or networks.g.output_dim != 1:
        raise NetworkError("terminal network must map R^d -> R")
    if networks.f.input_dim != 1 or networks.f.output_dim != 1:
        raise NetworkError("nonlinearity network must map R -> R")

    mu_arch = architecture(networks.mu)
    sigma_arch = networks.sigma.reference_architecture
    f_arch = architecture(networks.f)
    g_arch = architecture(networks.g)
    prediction = predict_architecture(mu_arch, sigma_arch, f_arch, g_arch,
                                      n, M, grid.steps, d)
    if prediction.param_count > PARAM_GUARD:
        raise BuildSizeError(prediction.param_count, prediction.depth, prediction.width)

    y_depth = len(euler_architecture(mu_arch, sigma_arch, d, grid.steps))
    f_depth, g_depth = len(f_arch), len(g_arch)

    def euler_net(branch: IndexPath, start: float, stop: float) -> ReluNetwork:
        return build_euler_network(networks.mu, networks.sigma, grid, sample,
                                   branch, start, stop)

    def build_level(level: int, branch: IndexPath, start: float) -> ReluNetwork:
        if level == 0:
            return zero_network(d, 1, y_depth + g_depth - 1)
        parts: list[ReluNetwork] = []
        coefs: list[float] = []
        pad = identity_network(1, level * (f_depth - 2 + y_depth) + 1)
        for i in range(1, M**level + 1):
            ynet = euler_net(child(branch, 0, -i), start, T)
            parts.append(compose(pad, compose(networks.g, ynet)))
            coefs.append(1.0 / M**level)
        for l in range(level):
            weight = (T - start) / M ** (level - l)
            for i in range(1, M ** (level - l) + 1):
                node = child(branch, l, i)
                ts = uniform_time(sample, node, start, T)
                ynet = euler_net(node, start, ts)
                core = compose(build_level(l, node, ts), ynet)
                if l <= level - 2:
                    core = compose(
                        identity_network(1, (level - 1 - l) * (f_depth - 2 + y_depth) + 1),
                        core,
                    )
                parts.append(compose(networks.f, core))
                coefs.append(weight)
                if l >= 1:
                    prev = compose(build_level(l - 1, child(branch, -l, i), ts), ynet)
                    prev = compose(
                        identity_network(1, (level - l) * (f_depth - 2 + y_depth) + 1),
                        prev,
                    )
                    parts.append(compose(networks.f, prev))
                    coefs.append(-weight)
        return sum_networks(coefs, parts)

    net = build_level(n, tuple(path), float(t))
    built_arch = architecture(net)
    assert prediction.satisfied_by(built_arch), "built architecture diverged from prediction"
    provenance = {
        "theta": [int(v) for v in path],
        "t": float(t),
        "n": int(n),
        "M": int(M),
        "seed": int(sample.master_seed),
        "grid": [float(p) for p in grid.points],
    }
    return BuiltMlpNetwork(net, provenance, prediction)
