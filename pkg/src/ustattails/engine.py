"""U-statistic simulation engine.

Replication i of every experiment draws from its own counter-based stream
keyed by (seed, i), so results do not depend on chunk sizes or evaluation
order and any single replication can be reproduced in isolation.  Data draws
and subset draws for incomplete averaging use separately salted keys so the
two never share a stream.

Exact averaging enumerates all index subsets of size d; above the tuple
budget it switches to incomplete averaging over randomly sampled index
tuples and notes the switch.  Decompositions into canonical (completely
degenerate) projection terms are available for kernels carrying a finite
weighted alphabet, and give exact means, variances, and ranks.
"""

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from itertools import combinations

import numpy as np

EXACT_TUPLE_BUDGET = 2_000_000
RANK_TOL = 1e-10
_DECOMP_MAX_DEGREE = 4
_DECOMP_MAX_CELLS = 20_000_000

_LANE_SALTS = {"data": 0, "tuples": 0x9E3779B97F4A7C15}
_U64 = 0xFFFFFFFFFFFFFFFF


def _stream(seed, rep, lane="data"):
    """Independent generator for one replication of one lane."""
    key = np.array(
        [(int(seed) ^ _LANE_SALTS[lane]) & _U64, int(rep) & _U64], dtype=np.uint64
    )
    return np.random.Generator(np.random.Philox(key=key))


# -- samplers ----------------------------------------------------------


@dataclass
class Sampler:
    """A distribution for the i.i.d. inputs.

    ``alphabet`` is (values, weights) when the distribution is finitely
    supported; that is what makes exact decompositions available.
    """

    name: str
    draw: callable
    alphabet: tuple | None = None


def alphabet_sampler(values, weights=None, *, name="alphabet"):
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise ValueError("alphabet needs a 1-d array of values")
    if np.unique(v).size != v.size:
        raise ValueError("alphabet values must be distinct")
    if weights is None:
        w = np.full(v.size, 1.0 / v.size)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != v.shape or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be nonnegative and match the values")
        w = w / w.sum()

    def draw(rng, size):
        return rng.choice(v, size=size, p=w)

    return Sampler(name, draw, (v, w))


def rademacher_sampler():
    return alphabet_sampler([-1.0, 1.0], name="rademacher")


def normal_sampler():
    return Sampler("normal", lambda rng, size: rng.standard_normal(size))


def uniform_sampler(lo=0.0, hi=1.0):
    if not hi > lo:
        raise ValueError("need hi > lo")
    return Sampler("uniform", lambda rng, size: rng.uniform(lo, hi, size))


def pareto_sampler(a):
    """Symmetric heavy-tailed law: |X| is Pareto with index a, sign fair.

    Moments of order p >= a are infinite, so constant envelopes with
    p_sup < a are the only honest description of this law.
    """
    if a <= 0:
        raise ValueError("pareto index must be positive")

    def draw(rng, size):
        mag = 1.0 + rng.pareto(a, size)
        sign = rng.integers(0, 2, size) * 2.0 - 1.0
        return mag * sign

    return Sampler("pareto", draw)


def lognormal_sampler(sigma=1.0):
    """Signed lognormal: sign * exp(sigma Z).

    |X|_p = exp(sigma^2 p / 2) exactly, the cleanest law whose moment growth
    follows the exponential-power envelope with unit power.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")

    def draw(rng, size):
        mag = np.exp(sigma * rng.standard_normal(size))
        sign = rng.integers(0, 2, size) * 2.0 - 1.0
        return mag * sign

    return Sampler("lognormal", draw)


def parse_sampler(spec):
    """Build a sampler from a spec string like ``pareto:a=3``."""
    parts = spec.strip().split(":")
    name, kv = parts[0], {}
    for tok in parts[1:]:
        if "=" not in tok:
            raise ValueError(f"malformed sampler option {tok!r}")
        k, v = tok.split("=", 1)
        kv[k] = v
    if name == "normal":
        return normal_sampler()
    if name == "uniform":
        return uniform_sampler(float(kv.get("lo", 0.0)), float(kv.get("hi", 1.0)))
    if name == "rademacher":
        return rademacher_sampler()
    if name == "pareto":
        return pareto_sampler(float(kv["a"]))
    if name == "lognormal":
        return lognormal_sampler(float(kv.get("sigma", 1.0)))
    if name == "alphabet":
        values = [float(x) for x in kv["values"].split(",")]
        weights = (
            [float(x) for x in kv["weights"].split(",")] if "weights" in kv else None
        )
        return alphabet_sampler(values, weights)
    raise ValueError(f"unknown sampler {name!r}")


# -- kernels -----------------------------------------------------------


@dataclass
class Kernel:
    """Symmetric kernel of a given degree, evaluated over an index grid.

    ``fn(xs, t)`` takes a tuple of ``degree`` broadcastable arrays and an
    index label from ``t_grid``.  Scalar kernels use the single label "t0".
    ``alphabet`` mirrors the sampler's (values, weights) when attached and
    unlocks exact decomposition.
    """

    name: str
    degree: int
    t_grid: tuple
    fn: callable
    alphabet: tuple | None = None


def attach_alphabet(kernel, sampler):
    if sampler.alphabet is None:
        raise ValueError(f"sampler {sampler.name!r} has no finite alphabet")
    return replace(kernel, alphabet=sampler.alphabet)


_GPROD_SHAPES = {"sin": np.sin, "tanh": np.tanh, "identity": lambda x: x}


def make_kernel(name, degree=None, *, shift=0.0, g="sin", t_grid=None, values=None, table=None):
    if name == "product":
        d = 2 if degree is None else int(degree)
        if d < 1:
            raise ValueError("degree must be at least 1")

        def fn(xs, t):
            out = xs[0] - shift
            for x in xs[1:]:
                out = out * (x - shift)
            return out

        return Kernel("product", d, ("t0",), fn)
    if name == "sum":
        d = 2 if degree is None else int(degree)
        if d < 1:
            raise ValueError("degree must be at least 1")

        def fn(xs, t):
            out = xs[0] - shift
            for x in xs[1:]:
                out = out + (x - shift)
            return out

        return Kernel("sum", d, ("t0",), fn)
    if name == "half_sq_diff":
        if degree not in (None, 2):
            raise ValueError("half_sq_diff has degree 2")

        def fn(xs, t):
            diff = xs[0] - xs[1]
            return 0.5 * diff * diff

        return Kernel("half_sq_diff", 2, ("t0",), fn)
    if name == "gprod":
        d = 2 if degree is None else int(degree)
        if d < 1:
            raise ValueError("degree must be at least 1")
        if t_grid is None:
            raise ValueError("gprod needs a numeric t_grid")
        shape_fn = _GPROD_SHAPES.get(g)
        if shape_fn is None:
            raise ValueError(f"unknown gprod shape {g!r}")
        grid = tuple(float(t) for t in t_grid)

        def fn(xs, t):
            out = shape_fn(t * xs[0])
            for x in xs[1:]:
                out = out * shape_fn(t * x)
            return out

        return Kernel("gprod", d, grid, fn)
    if name == "table":
        if degree not in (None, 1):
            raise ValueError("table kernels have degree 1")
        if values is None or table is None:
            raise ValueError("table kernels need alphabet values and a value table")
        v = np.asarray(values, dtype=float)
        tab = np.atleast_2d(np.asarray(table, dtype=float))
        if np.any(np.diff(v) <= 0):
            raise ValueError("table alphabet values must be strictly increasing")
        if tab.shape[0] != v.size:
            raise ValueError("table must have one row per alphabet value")
        grid = tuple(t_grid) if t_grid is not None else tuple(
            f"t{j}" for j in range(tab.shape[1])
        )
        if len(grid) != tab.shape[1]:
            raise ValueError("t_grid length must match the table column count")
        col = {t: j for j, t in enumerate(grid)}

        def fn(xs, t):
            idx = np.searchsorted(v, xs[0])
            idx = np.clip(idx, 0, v.size - 1)
            return tab[idx, col[t]]

        return Kernel("table", 1, grid, fn)
    raise ValueError(f"unknown kernel {name!r}")


def spot_check_symmetry(kernel, rng, *, trials=16, scale=1.0):
    """Evaluate at random points under random argument permutations."""
    d = kernel.degree
    for _ in range(trials):
        xs = rng.normal(0.0, scale, d)
        t = kernel.t_grid[0]
        base = float(np.asarray(kernel.fn(tuple(xs), t)))
        perm = rng.permutation(d)
        val = float(np.asarray(kernel.fn(tuple(xs[perm]), t)))
        if not math.isclose(base, val, rel_tol=1e-9, abs_tol=1e-12):
            return False
    return True


# -- averaging modes ---------------------------------------------------


@dataclass(frozen=True)
class Exact:
    budget: int = EXACT_TUPLE_BUDGET


@dataclass(frozen=True)
class Incomplete:
    subsets: int
    seed: int = 0


@lru_cache(maxsize=64)
def _index_tuples(n, d):
    return np.array(list(combinations(range(n), d)), dtype=np.intp)


def _sample_tuples(rng, n, d, count):
    """Random index tuples with distinct coordinates, vectorized rejection."""
    out = np.empty((count, d), dtype=np.intp)
    need = count
    filled = 0
    while need > 0:
        cand = rng.integers(0, n, size=(need, d))
        if d > 1:
            srt = np.sort(cand, axis=1)
            ok = np.all(np.diff(srt, axis=1) > 0, axis=1)
        else:
            ok = np.ones(need, dtype=bool)
        good = cand[ok]
        out[filled : filled + good.shape[0]] = good
        filled += good.shape[0]
        need = count - filled
    return out


def _resolve_mode(mode, n, d):
    """Returns (kind, tuple_count, notes)."""
    total = math.comb(n, d)
    notes = []
    if isinstance(mode, Exact):
        if total > mode.budget:
            notes.append(
                f"exact averaging needs {total} tuples, over the budget of "
                f"{mode.budget}; switched to incomplete averaging"
            )
            return "incomplete", mode.budget, notes
        return "exact", total, notes
    if isinstance(mode, Incomplete):
        if mode.subsets < 1:
            raise ValueError("incomplete averaging needs at least one subset")
        if mode.subsets >= total:
            notes.append(
                f"requested {mode.subsets} subsets but only {total} exist; "
                "using exact averaging"
            )
            return "exact", total, notes
        return "incomplete", mode.subsets, notes
    raise ValueError(f"unknown averaging mode {mode!r}")


@dataclass
class UStatResult:
    n: int
    labels: tuple
    values: np.ndarray
    mode: str
    subsets: int
    notes: list = field(default_factory=list)


def u_statistic_matrix(kernel, X, idx):
    """Averages over given index tuples for a batch of datasets.

    X has shape (batch, n), idx has shape (tuples, d); returns
    (batch, len(t_grid)).
    """
    X = np.asarray(X, dtype=float)
    gathers = tuple(X[:, idx[:, k]] for k in range(kernel.degree))
    out = np.empty((X.shape[0], len(kernel.t_grid)))
    for j, t in enumerate(kernel.t_grid):
        out[:, j] = np.mean(kernel.fn(gathers, t), axis=1)
    return out


def u_statistic(kernel, data, mode=None, *, rng=None):
    """U-statistic of a single dataset over the kernel's index grid."""
    x = np.asarray(data, dtype=float).ravel()
    n, d = x.size, kernel.degree
    if n <= d:
        raise ValueError(f"need more than degree = {d} observations, got {n}")
    mode = Exact() if mode is None else mode
    kind, count, notes = _resolve_mode(mode, n, d)
    if kind == "exact":
        idx = _index_tuples(n, d)
    else:
        if rng is None:
            rng = _stream(getattr(mode, "seed", 0), 0, "tuples")
        idx = _sample_tuples(rng, n, d, count)
    vals = u_statistic_matrix(kernel, x[None, :], idx)[0]
    return UStatResult(n, kernel.t_grid, vals, kind, count, notes)


# -- exact decomposition ------------------------------------------------


@dataclass
class Decomposition:
    """Canonical decomposition of one kernel component.

    ``zetas[c-1]`` is the second moment of the order-c canonical projection;
    ``rank`` is the smallest order with nonzero projection, and the variance
    of the corresponding U-statistic decays like n^(-rank).  ``terms[c-1]``
    holds the order-c projection on the alphabet grid, for diagnostics.
    """

    t: object
    mean: float
    zetas: np.ndarray
    rank: int
    degenerate: bool
    terms: list


@dataclass
class FieldDecomposition:
    per_t: list

    @property
    def means(self):
        return np.array([dec.mean for dec in self.per_t])

    @property
    def ranks(self):
        return [dec.rank for dec in self.per_t]


def hoeffding_decompose(kernel, t=None, *, rank_tol=RANK_TOL):
    """Exact canonical decomposition on the kernel's finite alphabet."""
    if kernel.alphabet is None:
        raise ValueError("decomposition requires a finite alphabet on the kernel")
    if t is None:
        if len(kernel.t_grid) != 1:
            raise ValueError("pick an index label t for a multi-point kernel")
        t = kernel.t_grid[0]
    values, probs = kernel.alphabet
    d = kernel.degree
    if d > _DECOMP_MAX_DEGREE:
        raise ValueError(f"decomposition supports degree up to {_DECOMP_MAX_DEGREE}")
    if values.size ** d > _DECOMP_MAX_CELLS:
        raise ValueError("alphabet too large for an exact degree-d table")
    grids = np.meshgrid(*([values] * d), indexing="ij")
    F = np.asarray(kernel.fn(tuple(grids), t), dtype=float)
    if F.shape != (values.size,) * d:
        F = np.broadcast_to(F, (values.size,) * d).copy()

    # conditional means h_c, contracting one trailing axis at a time
    h = [None] * (d + 1)
    h[d] = F
    for c in range(d - 1, -1, -1):
        h[c] = np.tensordot(h[c + 1], probs, axes=([c], [0]))
    mean = float(h[0])

    # canonical projections by subtracting all proper lower-order terms
    gs = [np.asarray(mean)]
    zetas = np.empty(d)
    for c in range(1, d + 1):
        g = h[c] - mean
        for k in range(1, c):
            for subset in combinations(range(c), k):
                shape = [1] * c
                for pos in subset:
                    shape[pos] = values.size
                g = g - gs[k].reshape(shape)
        z = g * g
        for _ in range(c):
            z = np.tensordot(z, probs, axes=([0], [0]))
        zetas[c - 1] = float(z)
        gs.append(g)

    scale = float(zetas.max(initial=0.0))
    if scale <= 0.0:
        return Decomposition(t, mean, np.zeros(d), d, True, gs[1:])
    zetas[zetas <= rank_tol * scale] = 0.0
    rank = int(np.argmax(zetas > 0.0)) + 1
    return Decomposition(t, mean, zetas, rank, False, gs[1:])


def decompose_field(kernel, *, rank_tol=RANK_TOL):
    return FieldDecomposition(
        [hoeffding_decompose(kernel, t, rank_tol=rank_tol) for t in kernel.t_grid]
    )


def field_rank(decomps):
    """Dominant rank of a field and the label partition by rank.

    The dominant rank is the smallest component rank: that component's
    variance decays slowest and controls the scale of the supremum, so it is
    the order the whole field is normalized by.
    """
    per_t = decomps.per_t if isinstance(decomps, FieldDecomposition) else list(decomps)
    partition = {}
    for dec in per_t:
        key = "degenerate" if dec.degenerate else dec.rank
        partition.setdefault(key, []).append(dec.t)
    ranks = [dec.rank for dec in per_t if not dec.degenerate]
    if not ranks:
        d = len(per_t[0].zetas) if per_t else 0
        return d, partition
    return min(ranks), partition


DEFAULT_SLOPE_GRID = (16, 32, 64, 128, 256)


@dataclass
class UVariance:
    var: float
    slope: float


def variance_value(decomp, n):
    """Exact Var(U_n) from the canonical projection second moments.

    The averaged statistic splits into uncorrelated order-c averages of the
    canonical terms, each entering comb(d, c) times and carrying variance
    zeta_c / comb(n, c), so the pieces add with squared multiplicities.
    """
    d = len(decomp.zetas)
    if n <= d:
        raise ValueError(f"need n > degree = {d}")
    acc = 0.0
    for c in range(1, d + 1):
        acc += math.comb(d, c) ** 2 * decomp.zetas[c - 1] / math.comb(n, c)
    return acc


def variance_u(decomp, n, slope_grid=None):
    """Exact variance at n plus the log-log decay slope over a grid of n."""
    var = variance_value(decomp, n)
    grid = np.asarray(slope_grid if slope_grid is not None else DEFAULT_SLOPE_GRID)
    if decomp.degenerate:
        return UVariance(var, 0.0)
    vals = np.array([variance_value(decomp, int(m)) for m in grid])
    if np.any(vals <= 0):
        return UVariance(var, 0.0)
    slope = float(np.polyfit(np.log(grid.astype(float)), np.log(vals), 1)[0])
    return UVariance(var, slope)


# -- normalization and panels -------------------------------------------


def deviation_scale(n, rank, convention="multiply"):
    """Scale applied to U_n minus its mean to form the deviation field."""
    if convention == "multiply":
        return float(n) ** (rank / 2.0)
    if convention == "divide":
        return float(n) ** (-rank / 2.0)
    raise ValueError(f"unknown normalization convention {convention!r}")


def normalized_deviation(values, mean, n, rank, convention="multiply"):
    return deviation_scale(n, rank, convention) * (np.asarray(values) - mean)


def draw_data(sampler, n, reps, seed):
    """(reps, n) matrix; row i comes from the stream keyed by (seed, i)."""
    X = np.empty((reps, n))
    for i in range(reps):
        X[i] = sampler.draw(_stream(seed, i, "data"), n)
    return X


def _default_chunk(tuple_count):
    return max(1, min(4096, int(4_000_000 // max(1, tuple_count))))


def u_statistic_panel(kernel, X, mode=None, *, seed=0, chunk=None):
    """U-statistic matrix (reps, t_grid) for a panel of datasets.

    Incomplete averaging draws a fresh tuple set per replication from the
    tuple lane keyed by (seed, replication index).
    """
    X = np.asarray(X, dtype=float)
    reps, n = X.shape
    d = kernel.degree
    if n <= d:
        raise ValueError(f"need more than degree = {d} observations, got {n}")
    mode = Exact() if mode is None else mode
    kind, count, notes = _resolve_mode(mode, n, d)
    out = np.empty((reps, len(kernel.t_grid)))
    if kind == "exact":
        idx = _index_tuples(n, d)
        step = chunk if chunk is not None else _default_chunk(idx.shape[0])
        for lo in range(0, reps, step):
            hi = min(lo + step, reps)
            out[lo:hi] = u_statistic_matrix(kernel, X[lo:hi], idx)
    else:
        for i in range(reps):
            idx = _sample_tuples(_stream(seed, i, "tuples"), n, d, count)
            out[i] = u_statistic_matrix(kernel, X[i : i + 1], idx)[0]
    return out, kind, count, notes


def simulate_panel(
    kernel,
    sampler,
    n,
    reps,
    seed,
    *,
    rank=None,
    mean_per_t=None,
    mode=None,
    convention="multiply",
    chunk=None,
    data=None,
):
    """Replicated draws of the normalized deviation field.

    Means and the rank come from the exact decomposition when the sampler
    has a finite alphabet.  Otherwise the rank must be supplied, and missing
    means fall back to the grand Monte Carlo mean across the panel (flagged
    in the metadata, since that recentering removes part of the deviation).

    ``data`` lets several kernels share one drawn panel; it must have shape
    (reps, n) and come from the same seed discipline if reproducibility
    across calls matters.
    """
    from .empirics import FieldSamples

    decomps = None
    if rank is None or mean_per_t is None:
        alphabet = kernel.alphabet or sampler.alphabet
        if alphabet is not None:
            decomps = decompose_field(replace(kernel, alphabet=alphabet))
    if rank is None:
        if decomps is None:
            raise ValueError(
                "rank cannot be derived without a finite alphabet; pass rank="
            )
        rank, _partition = field_rank(decomps)
    mean_source = "given"
    if mean_per_t is None:
        if decomps is not None:
            mean_per_t = decomps.means
            mean_source = "exact"
        else:
            mean_source = "grand_mc"
    X = draw_data(sampler, n, reps, seed) if data is None else np.asarray(data, float)
    if X.shape != (reps, n):
        raise ValueError(f"data must have shape ({reps}, {n}), got {X.shape}")
    U, kind, count, notes = u_statistic_panel(kernel, X, mode, seed=seed, chunk=chunk)
    if mean_source == "grand_mc":
        mean_per_t = U.mean(axis=0)
    means = np.broadcast_to(np.asarray(mean_per_t, dtype=float), (len(kernel.t_grid),))
    dev = deviation_scale(n, rank, convention) * (U - means[None, :])
    meta = {
        "n": n,
        "reps": reps,
        "seed": seed,
        "rank": rank,
        "convention": convention,
        "kernel": kernel.name,
        "degree": kernel.degree,
        "sampler": sampler.name,
        "mode": kind,
        "subsets": count,
        "mean_source": mean_source,
        "notes": list(notes),
    }
    return FieldSamples(kernel.t_grid, dev, meta)
