"""Picard iteration for controlled differential equations.

Solves dy = f(y) dx for a sampled rough driver x by iterating the
integral map: each step composes the vector field with the current
candidate, integrates the resulting one-form path, and measures the
operator-norm distance between consecutive integrand forms.  The
distance sequence exhibits factorial decay, which the solver fits and
reports; diagnostic towers and probes for uniqueness and continuity
live here as well.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .funcs import LipFunction, divide, strict_floor
from .integrate import (
    RegularityError,
    compose_integrand,
    rough_integral,
    taylor_oneform,
)
from .oneform import (
    DominationCertificate,
    OneFormPath,
    check_domination,
    integral_form_from_controlled,
)
from .path import Control, SampledPath, SampledRoughPath, control_from_pvar
from .tensor import split_matrix

__all__ = [
    "RdeProblem",
    "PicardState",
    "RdeSolution",
    "DecayReport",
    "TowerReport",
    "UniquenessReport",
    "ContinuityReport",
    "initial_state",
    "picard_step",
    "solve",
    "rescale_problem",
    "fixed_point_form",
    "fixed_point_residual",
    "difference_tower",
    "uniqueness_probe",
    "continuity_probe",
    "driver_distance",
]


@dataclass(frozen=True)
class RdeProblem:
    """dy = f(y) dx with y_0 = xi, driven by a sampled rough path."""

    driver: SampledRoughPath
    field: LipFunction
    xi: np.ndarray
    control: Control | None = None
    tol: float = 1e-10
    n_max: int = 25
    norm_cap: float = 1e8

    def __post_init__(self) -> None:
        xi = np.asarray(self.xi, dtype=float).reshape(-1)
        object.__setattr__(self, "xi", xi)
        out_shape = self.field.map.out_shape
        if out_shape != (xi.size, self.driver.dim):
            raise ValueError(
                f"field must map R^{xi.size} to {xi.size}x{self.driver.dim} "
                f"matrices, got output shape {out_shape}"
            )
        if self.field.map.in_dim != xi.size:
            raise ValueError(
                f"field domain dimension {self.field.map.in_dim} does not "
                f"match initial condition of size {xi.size}"
            )
        p = self.driver.p
        gamma = self.field.gamma
        if gamma <= p - 1.0:
            raise RegularityError(
                f"field regularity gamma={gamma} must exceed p-1={p - 1.0} "
                "for the integral map to be defined"
            )
        if gamma <= p:
            warnings.warn(
                f"gamma={gamma} is in the band (p-1, p]: the integral map is "
                "defined but convergence of the iteration is not guaranteed",
                stacklevel=2,
            )

    @property
    def gamma(self) -> float:
        return self.field.gamma

    @property
    def state_dim(self) -> int:
        return self.xi.size

    @cached_property
    def omega(self) -> Control:
        if self.control is not None:
            return self.control
        return control_from_pvar(self.driver)

    def with_driver(self, driver: SampledRoughPath) -> "RdeProblem":
        """Same equation over a different driver; the control is rebuilt."""
        return replace(self, driver=driver, control=None)


@dataclass(frozen=True)
class PicardState:
    """One iterate: candidate solution path and its integrand form."""

    n: int
    positions: np.ndarray
    form: OneFormPath
    delta: float | None = None
    sup_parts: tuple[float, ...] | None = None
    quot_parts: tuple[float, ...] | None = None

    def delta_at_scale(self, c: float, gamma: float) -> float | None:
        """The recorded distance re-weighed as if the driver were dilated by c.

        Dilation multiplies level k of the sup part by c^-k and, with the
        control rescaled by c^p, every difference quotient by c^-gamma.
        """
        if self.sup_parts is None:
            return self.delta
        sup = max(
            s * c ** -(k + 1) for k, s in enumerate(self.sup_parts)
        )
        quot = max(self.quot_parts) * c**-gamma if self.quot_parts else 0.0
        return sup + quot


def initial_state(problem: RdeProblem) -> PicardState:
    """Constant candidate at xi with the zero solution form."""
    n = problem.driver.num_steps + 1
    positions = np.broadcast_to(problem.xi, (n, problem.state_dim)).copy()
    form = OneFormPath.zero(problem.driver, problem.state_dim)
    return PicardState(n=0, positions=positions, form=form)


def picard_step(state: PicardState, problem: RdeProblem) -> PicardState:
    """One application of the integral map, with the step distance.

    The distance is the operator norm of the form difference.  Its
    coefficients are differences of O(coefficient-scale) numbers, so they
    carry that scale's absolute rounding error; the quotient numerators
    are floored there to keep fine-pair controls from amplifying noise
    into the reported distance.
    """
    new_form = compose_integrand(problem.field, state.positions, state.form)
    integral = rough_integral(new_form)
    positions = problem.xi[None, :] + integral.values
    diff = new_form - state.form
    scale = max(
        max(float(np.max(np.abs(b))) for b in new_form.levels),
        max(float(np.max(np.abs(b))) for b in state.form.levels),
        1.0,
    )
    floor = 64.0 * np.finfo(float).eps * scale
    sups, quots, _ = diff.norm_components(
        problem.gamma, problem.omega, noise_floor=floor
    )
    delta = max(sups) + (max(quots) if quots else 0.0)
    return PicardState(
        n=state.n + 1,
        positions=positions,
        form=new_form,
        delta=delta,
        sup_parts=sups,
        quot_parts=quots,
    )


@dataclass(frozen=True)
class DecayReport:
    """Distance sequence of the iteration against its factorial envelope.

    deltas[n] is the operator-norm distance between integrand forms n+1
    and n.  For n >= bracket_p the model bound is C^(n-[p]) divided by
    ((n-[p])/p)!; fitted_C is the least-squares fit of C over the tail.
    """

    deltas: tuple[float, ...]
    ratios: tuple[float, ...]
    fitted_C: float | None
    bounds: tuple[float, ...]
    bracket_p: int
    p: float
    tail_start: int

    def rows(self) -> list[tuple[int, float, float]]:
        return [
            (n, d, b) for n, (d, b) in enumerate(zip(self.deltas, self.bounds))
        ]

    def tail_bound(self) -> float:
        """Cauchy tail sum_{n > n_last} C^(n-[p]) / ((n-[p])/p)!

        Factorial decay makes the series summable; terms are added until
        they stop moving the total.  nan when no C could be fitted.
        """
        if self.fitted_C is None:
            return math.nan
        total = 0.0
        for n in range(len(self.deltas), len(self.deltas) + 200):
            x = n - self.bracket_p
            term = self.fitted_C**x / math.gamma(x / self.p + 1.0)
            if total > 0 and term < 1e-17 * total:
                break
            total += term
        return total


def fit_decay(deltas: list[float], p: float) -> DecayReport:
    """Fit log delta_n + log Gamma((n-[p])/p + 1) ~ (n-[p]) log C."""
    bp = int(p)
    ds = tuple(float(d) for d in deltas)
    ratios = tuple(
        ds[i + 1] / ds[i] if ds[i] > 0 else math.nan for i in range(len(ds) - 1)
    )
    tail_start = bp + 2
    xs, ys = [], []
    for n, d in enumerate(ds):
        if n >= tail_start and math.isfinite(d) and d > 1e-13:
            x = n - bp
            xs.append(x)
            ys.append(math.log(d) + math.lgamma(x / p + 1.0))
    fitted = None
    if len(xs) >= 2:
        xs_a = np.asarray(xs)
        ys_a = np.asarray(ys)
        fitted = float(math.exp(np.dot(xs_a, ys_a) / np.dot(xs_a, xs_a)))
    bounds = []
    for n in range(len(ds)):
        if fitted is None or n < bp:
            bounds.append(math.nan)
        else:
            x = n - bp
            bounds.append(fitted**x / math.gamma(x / p + 1.0))
    return DecayReport(
        deltas=ds,
        ratios=ratios,
        fitted_C=fitted,
        bounds=tuple(bounds),
        bracket_p=bp,
        p=p,
        tail_start=tail_start,
    )


@dataclass(frozen=True)
class RdeSolution:
    """Converged (or halted) result of the Picard iteration."""

    problem: RdeProblem
    times: np.ndarray
    positions: np.ndarray
    form: OneFormPath
    iterations: int
    converged: bool
    report: DecayReport
    fixed_point_residual: float
    certificate: DominationCertificate
    scale: float
    message: str
    history: tuple[PicardState, ...] | None = None

    @property
    def final_delta(self) -> float:
        return self.report.deltas[-1] if self.report.deltas else math.nan

    @property
    def form_error_bar(self) -> float:
        """Cauchy-tail estimate of how far `form` sits from the limit form.

        `form` is the last iterate, so the remaining distance is at most
        the sum of all future step distances; the fitted factorial envelope
        supplies that sum.
        """
        return self.report.tail_bound()

    def solution_path(self) -> SampledPath:
        return SampledPath(self.times, self.positions)


def _residual(problem: RdeProblem, state: PicardState) -> float:
    """Sup distance between the candidate and one more integral-map step."""
    nxt = picard_step(state, problem)
    return float(np.max(np.linalg.norm(nxt.positions - state.positions, axis=1)))


def solve(
    problem: RdeProblem,
    keep_history: bool = False,
    auto_rescale: bool = True,
) -> RdeSolution:
    """Iterate the integral map until the form distance drops below tol.

    Two consecutive increases of the (re-weighed) distance trigger a
    doubling of the dilation scale when auto_rescale is set; the path
    iterates themselves are scale-invariant, so only the reported
    distances change.  A distance exceeding norm_cap halts with a
    divergence message suggesting rescaling.
    """
    gamma = problem.gamma
    state = initial_state(problem)
    states = [state]
    c = 1.0
    rises = 0
    converged = False
    message = f"no iterations performed (n_max={problem.n_max})"
    for _ in range(problem.n_max):
        state = picard_step(state, problem)
        states.append(state)
        recorded = [s.delta_at_scale(c, gamma) for s in states[1:]]
        current = recorded[-1]
        if not math.isfinite(current):
            converged = False
            message = (
                "iteration diverged: form distance is not finite; the "
                "driver may fail the domination hypothesis"
            )
            break
        if current > problem.norm_cap:
            converged = False
            message = (
                f"iteration exceeded the norm cap {problem.norm_cap:g}; "
                "consider rescaling the problem (rescale_problem) or "
                "refining the control"
            )
            break
        if len(recorded) >= 2 and current > recorded[-2]:
            rises += 1
        else:
            rises = 0
        if rises >= 2 and auto_rescale:
            c *= 2.0
            rises = 0
        if current < problem.tol:
            converged = True
            message = f"converged: delta={current:.3e} < tol={problem.tol:g}"
            break
    else:
        if states[-1].delta is not None:
            message = (
                f"reached n_max={problem.n_max} with delta="
                f"{states[-1].delta_at_scale(c, gamma):.3e} >= tol={problem.tol:g}"
            )
    deltas = [s.delta_at_scale(c, gamma) for s in states[1:]]
    report = fit_decay(deltas, problem.driver.p)
    residual = _residual(problem, state)
    theta = (gamma + 1.0) / problem.driver.p
    certificate = check_domination(
        state.form, theta=theta, omega=problem.omega, auto_scale=True
    )
    return RdeSolution(
        problem=problem,
        times=problem.driver.times,
        positions=state.positions,
        form=state.form,
        iterations=state.n,
        converged=converged,
        report=report,
        fixed_point_residual=residual,
        certificate=certificate,
        scale=c,
        message=message,
        history=tuple(states) if keep_history else None,
    )


def rescale_problem(
    problem: RdeProblem, lam: float
) -> tuple[RdeProblem, float]:
    """Normalize the field bound to lam by trading size into the driver.

    With c = |f| / lam the field is shrunk by 1/c, the driver dilated by
    c, and the control scaled by c^p.  Solution paths are unchanged.
    """
    if lam <= 0.0:
        raise ValueError("target bound must be positive")
    c = problem.field.lip_norm_bound / lam
    if c <= 0.0 or not math.isfinite(c):
        raise ValueError(f"cannot rescale: field bound gives c={c}")
    scaled = RdeProblem(
        driver=problem.driver.dilate(c),
        field=problem.field.scaled(1.0 / c),
        xi=problem.xi,
        control=problem.omega.scaled(c**problem.driver.p),
        tol=problem.tol,
        n_max=problem.n_max,
        norm_cap=problem.norm_cap,
    )
    return scaled, c


def fixed_point_form(
    problem: RdeProblem,
    positions: np.ndarray,
    n_iter: int = 30,
    tol: float = 1e-13,
) -> OneFormPath:
    """Integrand form of a frozen candidate path, by iterating composition.

    For a genuine solution this converges to the form whose integral
    reproduces the path; it lets probes rebuild certificates for paths
    produced elsewhere (other scalings, other runs).
    """
    positions = np.asarray(positions, dtype=float)
    form = OneFormPath.zero(problem.driver, problem.state_dim)
    for _ in range(n_iter):
        new = compose_integrand(problem.field, positions, form)
        change = max(
            float(np.max(np.abs(a - b)))
            for a, b in zip(new.levels, form.levels)
        )
        form = new
        if change < tol:
            break
    return form


def fixed_point_residual(
    problem: RdeProblem, positions: np.ndarray
) -> tuple[float, OneFormPath]:
    """Sup distance between a path and the integral map applied to it."""
    form = fixed_point_form(problem, positions)
    integral = rough_integral(form)
    mapped = problem.xi[None, :] + integral.values
    resid = float(
        np.max(np.linalg.norm(mapped - np.asarray(positions), axis=1))
    )
    return resid, form


def _pair_field(problem: RdeProblem) -> LipFunction:
    """Divided-difference form of the field, one degree less regular."""
    h = divide(problem.field)
    if not isinstance(h, LipFunction):
        raise RegularityError(
            f"difference towers need gamma > 2, got {problem.gamma}"
        )
    return h


def _stacked_pair_form(
    form_a: OneFormPath, form_b: OneFormPath
) -> OneFormPath:
    """Concatenate two candidate paths into one controlled pair."""
    return OneFormPath.stack([form_a, form_b])


def _product_form(
    H_values: np.ndarray,
    H_form: OneFormPath,
    E_values: np.ndarray,
    E_form: OneFormPath,
) -> tuple[np.ndarray, OneFormPath]:
    """Controlled description of u -> H_u E_u.

    H takes values in m x d x m matrices (controlled with output index
    (i, j, a) flattened), E in vectors of size m or matrices m x m.  The
    product contracts the trailing axis of H with the leading axis of E;
    the cross terms pair partial levels of both forms through the
    adjoint split of the driver's signature levels.
    """
    base = H_form.base
    d = base.dim
    n = H_values.shape[0]
    m = H_values.shape[1]
    vector = E_values.ndim == 2
    w = m if vector else m * m
    if vector:
        phi = np.einsum("nija,na->nij", H_values, E_values)
    else:
        phi = np.einsum("nija,nab->nibj", H_values, E_values).reshape(n, w, d)
    phi = phi.reshape(n, w, d)
    levels = []
    for k in range(1, base.level + 1):
        acc = np.zeros((n, w * d, d**k))
        BH = H_form.levels[k - 1].reshape(n, m, d, m, d**k)
        if vector:
            acc += np.einsum("nijaK,na->nijK", BH, E_values).reshape(
                n, w * d, d**k
            )
            acc += np.einsum(
                "nija,naK->nijK", H_values, E_form.levels[k - 1]
            ).reshape(n, w * d, d**k)
        else:
            FE = E_form.levels[k - 1].reshape(n, m, m, d**k)
            acc += np.einsum("nijaK,nab->nibjK", BH, E_values).reshape(
                n, w * d, d**k
            )
            acc += np.einsum("nija,nabK->nibjK", H_values, FE).reshape(
                n, w * d, d**k
            )
        for k1 in range(1, k):
            k2 = k - k1
            BH1 = H_form.levels[k1 - 1].reshape(n, m, d, m, d**k1)
            if vector:
                FE2 = E_form.levels[k2 - 1].reshape(n, m, d**k2)
                cross = np.einsum("nijaA,naB->nijAB", BH1, FE2).reshape(
                    n, w * d, d**k
                )
            else:
                FE2 = E_form.levels[k2 - 1].reshape(n, m, m, d**k2)
                cross = np.einsum("nijaA,nabB->nibjAB", BH1, FE2).reshape(
                    n, w * d, d**k
                )
            acc += cross @ split_matrix(d, (k1, k2))
        levels.append(acc)
    return phi, OneFormPath(base, w * d, tuple(levels))


def _integrate_from(form: OneFormPath, start: int, shape: tuple[int, ...]) -> np.ndarray:
    """Increments of the rough integral of form, started at grid index start."""
    contrib = form.step_values()
    n = contrib.shape[0] + 1
    out = np.zeros((n,) + (int(np.prod(shape)),))
    if start < n - 1:
        out[start + 1 :] = np.cumsum(contrib[start:], axis=0)
    return out.reshape((n,) + shape)


def _reshape_H_form(H_form: OneFormPath, m: int, d: int) -> OneFormPath:
    """Reindex a form with output (i, j, a) to output ((i, a), j).

    The divided-difference field produces m x d x m matrices; the product
    machinery wants the contraction slot last, integration wants the
    driver slot last.  This permutes the flattened output axis only.
    """
    n = H_form.levels[0].shape[0]
    levels = []
    for k, block in enumerate(H_form.levels, start=1):
        arr = block.reshape(n, m, d, m, d**k)
        levels.append(
            np.ascontiguousarray(arr.transpose(0, 1, 3, 2, 4)).reshape(
                n, m * m * d, d**k
            )
        )
    return OneFormPath(H_form.base, m * m * d, tuple(levels))


@dataclass(frozen=True)
class TowerReport:
    """Diagnostics for the two-parameter difference tower.

    eta[(l, n)] holds the tower values as an array indexed by (start,
    end) grid points; consistency entries are worst-case residuals of
    identities every tower must satisfy, and the bound entries compare
    measured sizes with their factorial envelopes.
    """

    levels: tuple[tuple[int, int], ...]
    eta_sup: dict[tuple[int, int], float]
    beta_norms: dict[tuple[int, int], float]
    z_cross_residual: float
    chasles_residual: float
    fitted_M: float
    eta_bound_ok: bool
    fitted_beta_C: float | None
    beta_bound_ok: bool

    def eta_envelope(self, l: int, n: int, omega_value: float, p: float) -> float:
        q = (n - l + 1) / p
        return self.fitted_M**q * omega_value**q / (3.0 * p * math.gamma(q + 1.0))


def difference_tower(
    problem: RdeProblem,
    l_max: int = 2,
    n_max: int = 4,
) -> TowerReport:
    """Build the nested difference tower of the iteration and audit it.

    eta^{l,n}_{s,t} integrates the divided-difference field along the
    pair of consecutive iterates against the previous tower level; the
    diagonal seeds integrate the divided field itself, and the base row
    is the field frozen at the initial condition.  The report checks the
    telescoping identity against iterate differences, the two-parameter
    Chasles identity, and the factorial envelopes for both the values
    and the operator norms of the associated forms.
    """
    if l_max < 0 or n_max < l_max:
        raise ValueError("need 0 <= l_max <= n_max")
    m = problem.state_dim
    d = problem.driver.dim
    p = problem.driver.p
    gamma = problem.gamma
    npts = problem.driver.num_steps + 1
    h = _pair_field(problem)

    state = initial_state(problem)
    iterates = [state]
    for _ in range(n_max + 2):
        state = picard_step(state, problem)
        iterates.append(state)

    pair_vals: dict[int, np.ndarray] = {}
    pair_taylor: dict[int, OneFormPath] = {}
    for n in range(n_max + 1):
        ya = iterates[n + 1].positions
        yb = iterates[n].positions
        pair_pos = np.concatenate([ya, yb], axis=1)
        pair_form = _stacked_pair_form(iterates[n + 1].form, iterates[n].form)
        hv = h.apply(pair_pos).reshape(npts, m, d, m)
        ht = taylor_oneform(h, pair_pos, pair_form)
        pair_vals[n] = hv
        pair_taylor[n] = ht

    # eta values indexed [s, t] (zero for t < s); forms per start index s.
    values: dict[tuple[int, int], np.ndarray] = {}
    forms: dict[tuple[int, int], list[OneFormPath]] = {}

    f0 = problem.field.apply(problem.xi[None, :]).reshape(m, d)
    seed_levels = [np.broadcast_to(f0.reshape(1, m, d), (npts, m, d)).copy()]
    for k in range(2, problem.driver.level + 1):
        seed_levels.append(np.zeros((npts, m, d**k)))
    seed_form = OneFormPath(problem.driver, m, tuple(seed_levels))
    incs = _integrate_from(seed_form, 0, (m,))
    vals00 = np.zeros((npts, npts, m))
    for s in range(npts):
        vals00[s] = incs - incs[s]
        vals00[s, :s] = 0.0
    values[(0, 0)] = vals00
    forms[(0, 0)] = [seed_form] * npts

    for l in range(1, l_max + 1):
        hv = pair_vals[l - 1]
        phi = np.ascontiguousarray(hv.transpose(0, 1, 3, 2)).reshape(
            npts, m * m, d
        )
        B = _reshape_H_form(pair_taylor[l - 1], m, d)
        form_ll = integral_form_from_controlled(phi, B)
        vals = np.zeros((npts, npts, m, m))
        full = _integrate_from(form_ll, 0, (m, m))
        for s in range(npts):
            vals[s] = full - full[s]
            vals[s, :s] = 0.0
        values[(l, l)] = vals
        forms[(l, l)] = [form_ll] * npts

    for l in range(0, l_max + 1):
        for n in range(l, n_max):
            hv = pair_vals[n]
            ht = pair_taylor[n]
            prev_vals = values[(l, n)]
            prev_forms = forms[(l, n)]
            vector = l == 0
            shape = (m,) if vector else (m, m)
            vals = np.zeros((npts, npts) + shape)
            flist = []
            for s in range(npts):
                phi, Bphi = _product_form(hv, ht, prev_vals[s], prev_forms[s])
                form_s = integral_form_from_controlled(phi, Bphi)
                inc = _integrate_from(form_s, s, shape)
                vals[s] = inc
                flist.append(form_s)
            values[(l, n + 1)] = vals
            forms[(l, n + 1)] = flist

    keys = sorted(values.keys())
    eta_sup = {
        key: float(np.max(np.abs(values[key]))) for key in keys
    }

    z_res = 0.0
    for n in range(0, n_max + 1):
        diff = iterates[n + 1].positions - iterates[n].positions
        z_res = max(z_res, float(np.max(np.abs(values[(0, n)][0] - diff))))

    rng = np.random.default_rng(7)
    chasles = 0.0
    for (l, n) in keys:
        # the cross terms need towers started at every level up to n
        if n <= l or n > l_max or npts < 3:
            continue
        for _ in range(min(20, npts**2)):
            s = int(rng.integers(0, npts - 2))
            u = int(rng.integers(s + 1, npts - 1))
            t = int(rng.integers(u + 1, npts))
            lhs = values[(l, n)][s, t]
            rhs = values[(l, n)][s, u] + values[(l, n)][u, t]
            for j in range(l + 1, n + 1):
                rhs = rhs + values[(j, n)][u, t] @ values[(l, j - 1)][s, u]
            chasles = max(chasles, float(np.max(np.abs(lhs - rhs))))

    omega = problem.omega
    fitted_M = 1.0
    for (l, n) in keys:
        q = (n - l + 1) / p
        denom = 3.0 * p * math.gamma(q + 1.0)
        for s in range(npts - 1):
            for t in range(s + 1, npts):
                size = float(np.max(np.abs(values[(l, n)][s, t])))
                if size <= 0.0:
                    continue
                wv = omega.value(s, t)
                if wv <= 0.0:
                    fitted_M = math.inf
                    continue
                need = (size * denom / wv**q) ** (1.0 / q)
                fitted_M = max(fitted_M, need)
    eta_ok = math.isfinite(fitted_M)

    beta_norms = {}
    for (l, n) in keys:
        beta_norms[(l, n)] = float(
            forms[(l, n)][0].operator_norm(gamma, omega)
        )
    bp = int(p)
    cs = []
    for (l, n), nb in beta_norms.items():
        x = n - bp - l
        if x >= 1 and nb > 1e-13 and math.isfinite(nb):
            cs.append((nb * math.gamma(x / p + 1.0)) ** (1.0 / x))
    fitted_C = max(cs) if cs else None
    beta_ok = all(math.isfinite(v) for v in beta_norms.values())

    return TowerReport(
        levels=tuple(keys),
        eta_sup=eta_sup,
        beta_norms=beta_norms,
        z_cross_residual=z_res,
        chasles_residual=chasles,
        fitted_M=fitted_M,
        eta_bound_ok=eta_ok,
        fitted_beta_C=fitted_C,
        beta_bound_ok=beta_ok,
    )


@dataclass(frozen=True)
class UniquenessReport:
    """Contraction-tower evidence that two solutions coincide."""

    sup_distance: float
    operator_sups: tuple[float, ...]
    implied_bounds: tuple[float, ...]
    equal_within: float
    conclusive: bool

    @property
    def final_bound(self) -> float:
        return self.implied_bounds[-1] if self.implied_bounds else math.nan


def uniqueness_probe(
    problem: RdeProblem,
    positions_a: np.ndarray,
    positions_b: np.ndarray,
    n_max: int = 10,
    residual_tol: float = 1e-8,
) -> UniquenessReport:
    """Bound the distance of two certified solutions through the tower.

    Both inputs must satisfy the fixed-point identity and carry a finite
    domination certificate; otherwise the probe refuses.  The operator
    tower Phi^{n+1} = integral of h(y_a, y_b) Phi^n dx contracts
    factorially, and each stage multiplies the observed sup distance
    into an implied bound; the identity y_a - y_b = Phi^n (y_a - y_b)
    holds at solution pairs, so the bounds apply to the distance itself.
    """
    positions_a = np.asarray(positions_a, dtype=float)
    positions_b = np.asarray(positions_b, dtype=float)
    m = problem.state_dim
    d = problem.driver.dim
    npts = problem.driver.num_steps + 1
    if positions_a.shape != (npts, m) or positions_b.shape != (npts, m):
        raise ValueError(
            f"candidate solutions must have shape {(npts, m)}"
        )
    for label, pos in (("first", positions_a), ("second", positions_b)):
        if float(np.max(np.abs(pos[0] - problem.xi))) > residual_tol:
            raise ValueError(
                f"{label} candidate does not start at the initial condition"
            )
        resid, form = fixed_point_residual(problem, pos)
        if resid > residual_tol:
            raise ValueError(
                f"{label} candidate is not a solution: fixed-point residual "
                f"{resid:.3e} exceeds {residual_tol:g}"
            )
        cert = check_domination(
            form,
            theta=(problem.gamma + 1.0) / problem.driver.p,
            omega=problem.omega,
            auto_scale=True,
        )
        if not cert.ok:
            raise ValueError(
                f"{label} candidate admits no finite domination certificate"
            )
    form_a = fixed_point_form(problem, positions_a)
    form_b = fixed_point_form(problem, positions_b)
    diff = positions_a - positions_b
    sup_d = float(np.max(np.linalg.norm(diff, axis=1)))

    h = _pair_field(problem)
    pair_pos = np.concatenate([positions_a, positions_b], axis=1)
    pair_form = _stacked_pair_form(form_a, form_b)
    hv = h.apply(pair_pos).reshape(npts, m, d, m)
    ht = taylor_oneform(h, pair_pos, pair_form)

    phi_vals = np.broadcast_to(np.eye(m).reshape(1, m, m), (npts, m, m)).copy()
    phi_form = OneFormPath.zero(problem.driver, m * m)
    op_sups = []
    bounds = []
    for _ in range(n_max):
        pv, pf = _product_form(hv, ht, phi_vals, phi_form)
        form_n = integral_form_from_controlled(pv, pf)
        phi_vals = _integrate_from(form_n, 0, (m, m))
        phi_form = form_n
        mats = phi_vals.reshape(npts, m, m)
        sup_op = float(
            np.max(np.linalg.norm(mats, ord=2, axis=(1, 2)))
        ) if m > 1 else float(np.max(np.abs(mats)))
        op_sups.append(sup_op)
        bounds.append(sup_op * sup_d)
    final = bounds[-1] if bounds else sup_d
    return UniquenessReport(
        sup_distance=sup_d,
        operator_sups=tuple(op_sups),
        implied_bounds=tuple(bounds),
        equal_within=final,
        conclusive=final < 1e-10 or sup_d == 0.0,
    )


def driver_distance(a: SampledRoughPath, b: SampledRoughPath) -> float:
    """Control-style p-variation gauge of the difference of two lifts.

    Gap contributions sum the per-level block distances of the two
    signature increments and are raised to the p-th power; the value is
    the single-interval supremum accumulated over partitions, taken to
    the 1/p.  Linear in the perturbation size for nearby drivers.
    """
    if a.dim != b.dim or a.level != b.level or a.num_steps != b.num_steps:
        raise ValueError("drivers must share dimension, level, and grid size")
    if a.p != b.p:
        raise ValueError("drivers must share the variation exponent")
    n = a.num_steps + 1
    gaps = np.zeros((n, n))
    for k in range(1, a.level + 1):
        da = a.pairwise_levels[k - 1]
        db = b.pairwise_levels[k - 1]
        gaps += np.linalg.norm(da - db, axis=2)
    E = gaps**a.p
    best = np.zeros(n)
    for j in range(1, n):
        best[j] = np.max(best[:j] + E[:j, j])
    return float(best[-1] ** (1.0 / a.p))


@dataclass(frozen=True)
class ContinuityReport:
    """Solution displacement as a function of driver displacement."""

    rows: tuple[tuple[float, float], ...]
    fitted_order: float
    monotone: bool


def continuity_probe(
    problem: RdeProblem,
    drivers: list[SampledRoughPath],
) -> ContinuityReport:
    """Solve over perturbed drivers and tabulate the response.

    Rows pair each driver's gauge distance from the reference with the
    sup-norm displacement of the solution; the fitted order is the
    log-log slope, which local Lipschitz dependence puts at one.
    """
    base = solve(problem)
    rows = []
    for drv in drivers:
        dist = driver_distance(problem.driver, drv)
        sol = solve(problem.with_driver(drv))
        disp = float(
            np.max(np.linalg.norm(sol.positions - base.positions, axis=1))
        )
        rows.append((dist, disp))
    rows.sort(key=lambda r: r[0])
    xs = np.array([math.log(r[0]) for r in rows if r[0] > 0 and r[1] > 0])
    ys = np.array([math.log(r[1]) for r in rows if r[0] > 0 and r[1] > 0])
    order = math.nan
    if xs.size >= 2:
        order = float(np.polyfit(xs, ys, 1)[0])
    mono = all(rows[i][1] <= rows[i + 1][1] + 1e-15 for i in range(len(rows) - 1))
    return ContinuityReport(
        rows=tuple(rows), fitted_order=order, monotone=mono
    )
