"""Coupled truncation experiments: simulate, estimate, and check every bound.

A CoupledScenario pins one stochastic model (jump law, clock, generator,
forward semigroup, noise spectrum, initial state) together with a ladder of
truncation levels.  run_experiment simulates R coupled replications, where the
exact object and all of its truncations share every random draw, and emits one
BoundReport per (inequality, level): Monte Carlo left side, analytic right
side with plug-in moment factors estimated on the same replications, and a
margin in combined standard errors.  A bound passes when margin >= -3.

Two truncation modes exist:

  "jumps":      the jump vectors and the initial state are truncated to the
                first n coordinates while the generator stays exact.  The
                truncated path is a bona fide variance process (compression
                by a coordinate projection preserves positivity), so square
                root and forward-transport comparisons are included.

  "generator":  the generator is compressed to the index set {j + k <= n}
                while jumps and the initial state stay exact.  The compressed
                flow can leave the positive cone, so only variance-distance
                bounds are checked in this mode; no square roots are taken.

Statistics are always reduced in replication order in the parent process, so
results are bit-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from opvol.bounds import (
    BoundInputs,
    bound_forward,
    bound_pathwise,
    bound_pricing,
    bound_sqrt,
    bound_tensor_jump,
    bound_tensor_jump_trace,
    bound_cpp_diff,
    bound_variance_generator,
    bound_variance_generator_tail,
    bound_variance_jumps,
    combined_margin,
)
from opvol.forward import ForwardSemigroupSpec, forward_sup_error, simulate_forward_coupled
from opvol.operators import ProjectionSpec, norm, psd_sqrt_batch
from opvol.pricing import FunctionalSpec, PayoffSpec, PricingReport
from opvol.processes import (
    PURPOSE_CLOCK,
    PURPOSE_JUMPS,
    PURPOSE_WIENER,
    JumpLaw,
    PoissonClock,
    QWienerSpec,
    cp_second_moment,
    cp_second_moment_bound,
    sample_clock,
    sample_jump_stream,
    stream,
)
from opvol.variance import (
    GeneratorSpec,
    VariancePath,
    build_grid,
    eigen_tail_sup_sq,
    evolve_coupled,
    generator_gap_op_norm,
    karhunen_loeve_spectrum,
    make_stepper,
    sup_norm_stack,
    truncate_generator,
)

PASS_MARGIN = -3.0

TRUNCATION_MODES = ("jumps", "generator")


# --- scenario ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoupledScenario:
    """Full parameterization of one coupled truncation experiment."""

    d: int
    levels: tuple[int, ...]
    horizon: float
    m_points: int
    rate: float
    jump_gammas: np.ndarray
    q_spectrum: np.ndarray
    generator_kind: str
    generator_spectrum: np.ndarray
    forward_kind: str
    forward_spectrum: np.ndarray
    v0_diag: np.ndarray
    truncation: str
    payoff_kind: str
    payoff_strike: float
    functional_coordinate: int
    exercise_time: float
    replications: int
    master_seed: int
    truncate_v0: bool = False

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be positive")
        object.__setattr__(self, "levels", tuple(int(n) for n in self.levels))
        if not self.levels or any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("levels must be a nonempty strictly increasing tuple")
        if self.truncation not in TRUNCATION_MODES:
            raise ValueError(f"unknown truncation mode {self.truncation!r}")
        cap = self.d if self.truncation == "jumps" else 2 * self.d
        if self.levels[0] < 1 or self.levels[-1] > cap:
            raise ValueError(f"levels must lie in 1..{cap} for {self.truncation} truncation")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.m_points < 1:
            raise ValueError("need at least one time step")
        if self.rate < 0:
            raise ValueError("jump rate must be nonnegative")
        for name in ("jump_gammas", "q_spectrum", "generator_spectrum", "forward_spectrum", "v0_diag"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (self.d,):
                raise ValueError(f"{name} must have shape ({self.d},)")
            if name not in ("generator_spectrum", "forward_spectrum") and np.any(arr < 0):
                raise ValueError(f"{name} must be nonnegative")
            object.__setattr__(self, name, arr)
        if self.replications < 2:
            raise ValueError("need at least two replications for standard errors")
        dt = self.horizon / self.m_points
        steps = self.exercise_time / dt
        if not (0 < self.exercise_time <= self.horizon) or abs(steps - round(steps)) > 1e-9:
            raise ValueError("exercise_time must sit on the uniform grid in (0, horizon]")
        # constructor smoke checks: fail fast on bad kinds
        self.generator_spec()
        self.forward_spec()
        self.payoff()

    # model factories ---------------------------------------------------------

    def generator_spec(self) -> GeneratorSpec:
        return GeneratorSpec.diagonal(self.generator_kind, self.generator_spectrum)

    def truncated_generator_spec(self, n: int) -> GeneratorSpec:
        return truncate_generator(self.generator_spec(), ProjectionSpec.level(n, self.d))

    def forward_spec(self) -> ForwardSemigroupSpec:
        if self.forward_kind == "diagonal":
            return ForwardSemigroupSpec.diagonal(self.forward_spectrum)
        if self.forward_kind == "skew":
            A = np.zeros((self.d, self.d))
            w = self.forward_spectrum[: self.d - 1]
            A[np.arange(self.d - 1), np.arange(1, self.d)] = w
            A[np.arange(1, self.d), np.arange(self.d - 1)] = -w
            return ForwardSemigroupSpec(kind="skew", A=A)
        raise ValueError(f"unknown forward semigroup kind {self.forward_kind!r}")

    def jump_law(self) -> JumpLaw:
        return JumpLaw(gammas=self.jump_gammas)

    def q_spec(self) -> QWienerSpec:
        return QWienerSpec(q=self.q_spectrum)

    def v0(self) -> np.ndarray:
        return np.diag(self.v0_diag)

    def v0_at_level(self, n: int) -> np.ndarray:
        """Initial state of the level-n approximant.

        Jump truncation optionally truncates V0 to the same coordinate block
        (truncate_v0); generator compression always keeps V0 exact.
        """
        if self.truncation == "generator" or not self.truncate_v0:
            return self.v0()
        diag = self.v0_diag.copy()
        diag[n:] = 0.0
        return np.diag(diag)

    def payoff(self) -> PayoffSpec:
        if self.payoff_kind == "call":
            return PayoffSpec.call(self.payoff_strike)
        if self.payoff_kind == "put":
            return PayoffSpec.put(self.payoff_strike)
        if self.payoff_kind == "identity":
            return PayoffSpec.identity()
        if self.payoff_kind == "constant":
            # payoff_strike doubles as the constant value here
            return PayoffSpec.constant(self.payoff_strike)
        raise ValueError(f"unknown payoff kind {self.payoff_kind!r}")

    def functional(self) -> FunctionalSpec:
        return FunctionalSpec.coordinate(self.functional_coordinate, self.d)

    def with_(self, **changes) -> "CoupledScenario":
        return replace(self, **changes)


# --- reports -----------------------------------------------------------------


@dataclass(frozen=True)
class BoundReport:
    """One inequality at one truncation level.

    level 0 marks rows that do not depend on a truncation level (the compound
    Poisson moment identity rows).  A zero combined standard error yields an
    infinite margin whose sign is the sign of rhs - lhs, with ties passing.
    """

    bound_id: str
    level: int
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    margin: float
    passed: bool

    def __post_init__(self):
        if self.passed != (self.margin >= PASS_MARGIN):
            raise ValueError("pass flag inconsistent with the margin")


def make_report(bound_id: str, level: int, lhs: float, lhs_se: float,
                rhs: float, rhs_se: float = 0.0) -> BoundReport:
    margin = combined_margin(lhs, lhs_se, rhs, rhs_se)
    return BoundReport(
        bound_id=bound_id, level=level,
        lhs=float(lhs), lhs_se=float(lhs_se),
        rhs=float(rhs), rhs_se=float(rhs_se),
        margin=margin, passed=margin >= PASS_MARGIN,
    )


@dataclass(frozen=True)
class ExperimentResult:
    scenario: CoupledScenario
    reports: tuple[BoundReport, ...]
    pricing: tuple[PricingReport, ...]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports) and all(p.passed for p in self.pricing)

    def by_id(self, bound_id: str) -> tuple[BoundReport, ...]:
        return tuple(r for r in self.reports if r.bound_id == bound_id)


@dataclass(frozen=True)
class ConvergenceRow:
    level: int
    bound_id: str
    estimate: float
    stderr: float


@dataclass(frozen=True)
class ConvergenceStudy:
    """Per-level error estimates plus a weak-monotonicity verdict per series.

    A series is weakly decreasing when each estimate is at most the previous
    one plus three combined standard errors.
    """

    scenario: CoupledScenario
    rows: tuple[ConvergenceRow, ...]
    monotone: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.monotone) and all(self.monotone.values())

    def series(self, bound_id: str) -> tuple[ConvergenceRow, ...]:
        return tuple(r for r in self.rows if r.bound_id == bound_id)


# --- per-replication worker --------------------------------------------------


def _rep_stats(scenario: CoupledScenario, rep: int) -> dict:
    """Simulate one coupled replication and return its sufficient statistics.

    Every entry is a float except x_sum_tensor, the (d, d) sum of the jump
    operators, kept for the jackknife on |E X1|^2.  Per-jump quantities that
    feed pooled moments ship both their sum and their sum of squares.
    Per-level keys carry an '@n' suffix.
    """
    d, T, seed = scenario.d, scenario.horizon, scenario.master_seed
    levels = scenario.levels
    gen = scenario.generator_spec()
    mode = scenario.truncation

    if scenario.rate > 0:
        clock = sample_clock(scenario.rate, T, stream(seed, PURPOSE_CLOCK, rep))
    else:
        clock = PoissonClock(rate=0.0, horizon=T, times=np.empty(0))
    stream_levels = levels if mode == "jumps" else ()
    js = sample_jump_stream(clock, scenario.jump_law(), stream_levels, stream(seed, PURPOSE_JUMPS, rep))
    grid = build_grid(T, scenario.m_points, clock.times)

    out: dict = {"n_jumps": float(clock.count)}

    # jump moments: X = Y (x) Y is rank one, so |X|_HS = |X|_tr = |Y|^2
    y2 = np.sum(js.ys**2, axis=1)
    out["sum_y2"] = float(np.sum(y2))
    out["sum_y4"] = float(np.sum(y2**2))
    out["sum_y8"] = float(np.sum(y2**4))
    out["x_sum_tensor"] = js.jumps.sum(axis=0) if clock.count else np.zeros((d, d))
    out["l2_total"] = float(np.sum(out["x_sum_tensor"] ** 2))
    if mode == "jumps":
        for n in levels:
            y2n = np.sum(js.ys_at_level(n) ** 2, axis=1)
            dy2 = y2 - y2n  # |Y - Y^n|^2: the dropped coordinates are orthogonal
            out[f"sum_dy2@{n}"] = float(np.sum(dy2))
            out[f"sum_dy4@{n}"] = float(np.sum(dy2**2))
            out[f"sum_dy8@{n}"] = float(np.sum(dy2**4))
            dx_sq = y2**2 - y2n**2  # |X - X^n|_HS^2 for nested tensor squares
            out[f"sum_dx_sq@{n}"] = float(np.sum(dx_sq))
            out[f"sum_dx_sq_sq@{n}"] = float(np.sum(dx_sq**2))
            out[f"sum_dx_hs@{n}"] = float(np.sum(np.sqrt(np.maximum(dx_sq, 0.0))))
            if clock.count:
                dX = js.jumps - js.approx_jumps(n)
                sv = np.linalg.svd(dX, compute_uv=False)
                tr = np.sum(sv, axis=1)
                out[f"sum_dx_tr@{n}"] = float(np.sum(tr))
                out[f"sum_dx_tr_sq@{n}"] = float(np.sum(tr**2))
                # L - L^n is piecewise constant, so its sup sits at a jump time
                prefix = np.cumsum(dX, axis=0)
                out[f"cpp_sup_sq@{n}"] = float(np.max(np.sum(prefix**2, axis=(1, 2))))
            else:
                out[f"sum_dx_tr@{n}"] = 0.0
                out[f"sum_dx_tr_sq@{n}"] = 0.0
                out[f"cpp_sup_sq@{n}"] = 0.0

    # coupled variance paths: slot 0 exact, slot i the i-th level
    v0s = np.stack([scenario.v0()] + [scenario.v0_at_level(n) for n in levels])
    if mode == "jumps":
        steppers = [make_stepper(gen)] * (len(levels) + 1)
        jump_stacks = [js.jumps] + [js.approx_jumps(n) for n in levels]
    else:
        steppers = [make_stepper(gen)] + [
            make_stepper(scenario.truncated_generator_spec(n)) for n in levels
        ]
        jump_stacks = [js.jumps] * (len(levels) + 1)
    vals = evolve_coupled(v0s, steppers, jump_stacks, grid)

    for i, n in enumerate(levels, start=1):
        D = vals[0] - vals[i]
        sup_hs = sup_norm_stack(D, "hs")
        out[f"sup_hs@{n}"] = sup_hs
        out[f"sup_sq_hs@{n}"] = sup_hs**2
        out[f"sup_op@{n}"] = sup_norm_stack(D, "op")

    if mode == "jumps":
        sqrts = psd_sqrt_batch(vals)
        for i, n in enumerate(levels, start=1):
            dS = sqrts[0] - sqrts[i]
            out[f"sqrt_sup_sq_op@{n}"] = sup_norm_stack(dS, "op") ** 2
            out[f"sqrt_sup_sq_hs@{n}"] = sup_norm_stack(dS, "hs") ** 2

        exact_path = VariancePath(grid, vals[0], gen, v0s[0])
        approx = {
            n: VariancePath(grid, vals[i], gen, v0s[i])
            for i, n in enumerate(levels, start=1)
        }
        fpath = simulate_forward_coupled(
            exact_path, approx, scenario.forward_spec(), scenario.q_spec(),
            stream(seed, PURPOSE_WIENER, rep),
        )
        payoff = scenario.payoff()
        functional = scenario.functional()
        tau = scenario.exercise_time
        xt = fpath.at_time(tau)
        out["pay_exact"] = payoff.evaluate(functional.apply(xt))
        for n in levels:
            out[f"fwd_sup_sq@{n}"] = forward_sup_error(fpath, n)
            xtn = fpath.at_time(tau, n)
            out[f"pay_trunc@{n}"] = payoff.evaluate(functional.apply(xtn))
            out[f"dx_tau@{n}"] = float(np.linalg.norm(xt - xtn))

    return out


def _map_reps(scenario: CoupledScenario, workers: int) -> list[dict]:
    reps = range(scenario.replications)
    if workers <= 1:
        return [_rep_stats(scenario, r) for r in reps]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunk = max(1, scenario.replications // (workers * 4))
        return list(pool.map(partial(_rep_stats, scenario), reps, chunksize=chunk))


# --- reduction helpers -------------------------------------------------------


def _column(reps: list[dict], key: str) -> np.ndarray:
    return np.array([r[key] for r in reps])


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    m = float(np.mean(x))
    if x.size < 2:
        return m, 0.0
    return m, float(np.std(x, ddof=1) / math.sqrt(x.size))


def _pooled_moment(sums: np.ndarray, sq_sums: np.ndarray, counts: np.ndarray) -> tuple[float, float]:
    """Mean and stderr of a per-jump moment pooled across replications.

    Jumps are i.i.d. across the whole experiment, so the pool is one sample of
    size N = sum(counts); sq_sums holds the per-replication sums of squares of
    the same per-jump quantity.
    """
    n = float(np.sum(counts))
    if n == 0:
        return 0.0, 0.0
    mean = float(np.sum(sums) / n)
    if n < 2:
        return mean, 0.0
    var = max(float(np.sum(sq_sums)) - n * mean * mean, 0.0) / (n - 1.0)
    return mean, math.sqrt(var / n)


def _jackknife_mean_norm_sq(tensors: np.ndarray, counts: np.ndarray) -> tuple[float, float]:
    """|mean jump|_HS^2 with a leave-one-replication-out jackknife stderr."""
    n = float(np.sum(counts))
    if n == 0:
        return 0.0, 0.0
    total = tensors.sum(axis=0)
    est = float(np.sum((total / n) ** 2))
    rest = n - counts
    if np.any(rest <= 0) or tensors.shape[0] < 2:
        return est, 0.0
    loo = (total[None] - tensors) / rest[:, None, None]
    theta = np.sum(loo**2, axis=(1, 2))
    r = theta.size
    se = math.sqrt((r - 1.0) / r * float(np.sum((theta - np.mean(theta)) ** 2)))
    return est, se


def _product_root_se(a: float, a_se: float, b: float, b_se: float, scale: float) -> float:
    """Delta-method stderr of scale * sqrt(a * b)."""
    if a <= 0.0 or b <= 0.0:
        return 0.0
    da = 0.5 * math.sqrt(b / a)
    db = 0.5 * math.sqrt(a / b)
    return scale * math.hypot(da * a_se, db * b_se)


# --- experiment reduction ----------------------------------------------------


def _moment_rows(scenario: CoupledScenario, reps: list[dict], counts: np.ndarray,
                 m4: tuple[float, float]) -> list[BoundReport]:
    """Second moment of the compound Poisson sum, checked from both sides
    against the identity rate*t*m2 + (rate*t)^2*m1sq and from below against
    the coarse bound rate*t*(1 + rate*t)*m2."""
    lam, T = scenario.rate, scenario.horizon
    lhs, lhs_se = _mean_se(_column(reps, "l2_total"))
    tensors = np.stack([r["x_sum_tensor"] for r in reps])
    m1sq, m1sq_se = _jackknife_mean_norm_sq(tensors, counts)
    ident = cp_second_moment(lam, T, m4[0], m1sq)
    ident_se = math.hypot(lam * T * m4[1], lam * lam * T * T * m1sq_se)
    coarse = cp_second_moment_bound(lam, T, m4[0])
    coarse_se = lam * T * (1.0 + lam * T) * m4[1]
    return [
        make_report("cpp_moment_upper", 0, lhs, lhs_se, ident, ident_se),
        make_report("cpp_moment_lower", 0, ident, ident_se, lhs, lhs_se),
        make_report("cpp_moment_bound", 0, lhs, lhs_se, coarse, coarse_se),
    ]


def _reduce_jumps(scenario: CoupledScenario, reps: list[dict]) -> ExperimentResult:
    lam, T = scenario.rate, scenario.horizon
    gen = scenario.generator_spec()
    gn = gen.op_norm
    fwd = scenario.forward_spec()
    base = BoundInputs(horizon=T, rate=lam, gen_norm=gn)
    c0, c1 = bound_variance_jumps(base)
    _, c1_sharp = bound_variance_jumps(base, sharp=True)
    cpp_const = bound_cpp_diff(base)
    sqrt_hs_factor = bound_sqrt(base, "hs-jumps")
    fwd_const = bound_forward(
        BoundInputs(c=fwd.c, k=fwd.k, trace_q=scenario.q_spec().trace_q, horizon=T)
    )
    payoff = scenario.payoff()
    functional = scenario.functional()

    counts = _column(reps, "n_jumps")
    m4 = _pooled_moment(_column(reps, "sum_y4"), _column(reps, "sum_y8"), counts)
    m2 = _pooled_moment(_column(reps, "sum_y2"), _column(reps, "sum_y4"), counts)

    reports = _moment_rows(scenario, reps, counts, m4)
    pricing: list[PricingReport] = []

    pay_exact = _column(reps, "pay_exact")

    for n in scenario.levels:
        dv0 = scenario.v0() - scenario.v0_at_level(n)
        dv0_hs = norm(dv0, "hs")
        dv0_sq = dv0_hs**2

        sup_sq, sup_sq_se = _mean_se(_column(reps, f"sup_sq_hs@{n}"))
        sup_hs, sup_hs_se = _mean_se(_column(reps, f"sup_hs@{n}"))
        dx_sq = _pooled_moment(
            _column(reps, f"sum_dx_sq@{n}"), _column(reps, f"sum_dx_sq_sq@{n}"), counts
        )
        dx_tr = _pooled_moment(
            _column(reps, f"sum_dx_tr@{n}"), _column(reps, f"sum_dx_tr_sq@{n}"), counts
        )
        dy2 = _pooled_moment(
            _column(reps, f"sum_dy2@{n}"), _column(reps, f"sum_dy4@{n}"), counts
        )
        dy4 = _pooled_moment(
            _column(reps, f"sum_dy4@{n}"), _column(reps, f"sum_dy8@{n}"), counts
        )

        reports.append(make_report(
            "variance_jumps", n, sup_sq, sup_sq_se,
            c0 * dv0_sq + c1 * dx_sq[0], c1 * dx_sq[1],
        ))
        reports.append(make_report(
            "variance_jumps_sharp", n, sup_sq, sup_sq_se,
            c0 * dv0_sq + c1_sharp * dx_sq[0], c1_sharp * dx_sq[1],
        ))
        cpp_sup, cpp_sup_se = _mean_se(_column(reps, f"cpp_sup_sq@{n}"))
        reports.append(make_report(
            "cpp_diff", n, cpp_sup, cpp_sup_se,
            cpp_const * dx_sq[0], cpp_const * dx_sq[1],
        ))

        slack = _column(reps, f"sup_hs@{n}") - np.array([
            bound_pathwise(gn, T, dv0_hs, r[f"sum_dx_hs@{n}"]) for r in reps
        ])
        reports.append(make_report(
            "variance_pathwise", n, float(np.max(slack)), 0.0, 0.0, 0.0,
        ))

        tensor_rhs = bound_tensor_jump(m4[0], dy4[0])
        reports.append(make_report(
            "jump_tensor_sq", n, dx_sq[0], dx_sq[1],
            tensor_rhs, _product_root_se(m4[0], m4[1], dy4[0], dy4[1], 4.0),
        ))
        trace_rhs = bound_tensor_jump_trace(m2[0], dy2[0])
        reports.append(make_report(
            "jump_tensor_trace", n, dx_tr[0], dx_tr[1],
            trace_rhs, _product_root_se(m2[0], m2[1], dy2[0], dy2[1], 2.0),
        ))

        sqrt_op, sqrt_op_se = _mean_se(_column(reps, f"sqrt_sup_sq_op@{n}"))
        sup_op, sup_op_se = _mean_se(_column(reps, f"sup_op@{n}"))
        reports.append(make_report(
            "sqrt_op", n, sqrt_op, sqrt_op_se,
            bound_sqrt(base, "op-norm", sup_op_error=sup_op), sup_op_se,
        ))
        if dv0_sq == 0.0:
            # the trace-route square root certificate assumes the approximant
            # starts from the exact initial state
            sqrt_hs, sqrt_hs_se = _mean_se(_column(reps, f"sqrt_sup_sq_hs@{n}"))
            reports.append(make_report(
                "sqrt_jumps_k1", n, sqrt_hs, sqrt_hs_se,
                sqrt_hs_factor * dx_tr[0], sqrt_hs_factor * dx_tr[1],
            ))

        fwd_sup, fwd_sup_se = _mean_se(_column(reps, f"fwd_sup_sq@{n}"))
        reports.append(make_report(
            "forward_noise", n, fwd_sup, fwd_sup_se,
            fwd_const * sup_hs, fwd_const * sup_hs_se,
        ))

        pay_trunc = _column(reps, f"pay_trunc@{n}")
        gap, gap_se = _mean_se(pay_exact - pay_trunc)
        price, price_se = _mean_se(pay_exact)
        price_n, price_n_se = _mean_se(pay_trunc)
        e_abs, e_abs_se = _mean_se(_column(reps, f"dx_tau@{n}"))
        lip = bound_pricing(payoff.lipschitz, functional.op_norm, e_abs)
        lip_se = payoff.lipschitz * functional.op_norm * e_abs_se
        cap_sq = fwd_const * sup_hs
        cap = payoff.lipschitz * functional.op_norm * math.sqrt(max(cap_sq, 0.0))
        if cap > 0.0:
            cap_se = payoff.lipschitz * functional.op_norm * fwd_const * sup_hs_se / (2.0 * math.sqrt(cap_sq))
        else:
            cap_se = 0.0
        pricing.append(PricingReport(
            level=n,
            price=price, price_se=price_se,
            price_trunc=price_n, price_trunc_se=price_n_se,
            price_diff=abs(gap), price_diff_se=gap_se,
            lipschitz_rhs=lip, lipschitz_rhs_se=lip_se,
            theorem_cap=cap, theorem_cap_se=cap_se,
        ))

    return ExperimentResult(scenario=scenario, reports=tuple(reports), pricing=tuple(pricing))


def _reduce_generator(scenario: CoupledScenario, reps: list[dict]) -> ExperimentResult:
    lam, T = scenario.rate, scenario.horizon
    gen = scenario.generator_spec()
    gn = gen.op_norm
    counts = _column(reps, "n_jumps")
    m4 = _pooled_moment(_column(reps, "sum_y4"), _column(reps, "sum_y8"), counts)
    m2 = _pooled_moment(_column(reps, "sum_y2"), _column(reps, "sum_y4"), counts)
    v0_sq = norm(scenario.v0(), "hs") ** 2

    reports = _moment_rows(scenario, reps, counts, m4)

    for n in scenario.levels:
        P = ProjectionSpec.level(n, scenario.d)
        trunc = scenario.truncated_generator_spec(n)
        gap = generator_gap_op_norm(gen, P)
        tail_sq = eigen_tail_sup_sq(gen, P)
        inputs = BoundInputs(
            horizon=T, rate=lam, gen_norm=gn, gen_norm_trunc=trunc.op_norm,
            v0_sq=v0_sq, jump_sq=m4[0], jump_mean_sq=m2[0] ** 2,
        )
        # the bounds are linear in each moment field, so bumping a field by
        # its stderr gives that field's exact contribution
        for bound_id, fn, factor in (
            ("variance_generator", bound_variance_generator, gap**2),
            ("variance_generator_tail", bound_variance_generator_tail, tail_sq),
        ):
            rhs = fn(inputs) * factor
            d_m4 = (fn(inputs.with_(jump_sq=m4[0] + m4[1])) - fn(inputs)) * factor
            m2sq_se = 2.0 * m2[0] * m2[1]
            d_m2 = (fn(inputs.with_(jump_mean_sq=m2[0] ** 2 + m2sq_se)) - fn(inputs)) * factor
            sup_sq, sup_sq_se = _mean_se(_column(reps, f"sup_sq_hs@{n}"))
            reports.append(make_report(
                bound_id, n, sup_sq, sup_sq_se, rhs, math.hypot(d_m4, d_m2),
            ))
        reports.append(make_report(
            "generator_gap_tail", n, gap, 0.0, math.sqrt(2.0 * tail_sq), 0.0,
        ))

    return ExperimentResult(scenario=scenario, reports=tuple(reports), pricing=())


def run_experiment(scenario: CoupledScenario, workers: int = 1) -> ExperimentResult:
    """Simulate the scenario and check every applicable bound.

    Deterministic given scenario.master_seed; the worker count only changes
    wall time, never results.
    """
    reps = _map_reps(scenario, workers)
    if scenario.truncation == "jumps":
        return _reduce_jumps(scenario, reps)
    return _reduce_generator(scenario, reps)


# --- convergence -------------------------------------------------------------


def convergence_study(scenario: CoupledScenario, workers: int = 1) -> ConvergenceStudy:
    """Per-level truncation error series with weak-monotonicity checks.

    Requires at least three levels.  Every series must be weakly decreasing:
    each estimate at most the previous one plus three combined stderrs.  The
    grid-sup error statistics are lower bounds for their continuous-time
    counterparts, which only strengthens the decrease check.
    """
    if len(scenario.levels) < 3:
        raise ValueError("a convergence study needs at least three levels")
    reps = _map_reps(scenario, workers)
    counts = _column(reps, "n_jumps")
    gen = scenario.generator_spec()

    rows: list[ConvergenceRow] = []
    for n in scenario.levels:
        est, se = _mean_se(_column(reps, f"sup_sq_hs@{n}"))
        rows.append(ConvergenceRow(n, "variance_sup_sq", est, se))
        if scenario.truncation == "jumps":
            est, se = _mean_se(_column(reps, f"fwd_sup_sq@{n}"))
            rows.append(ConvergenceRow(n, "forward_sup_sq", est, se))
            est, se = _mean_se(_column(reps, f"sqrt_sup_sq_hs@{n}"))
            rows.append(ConvergenceRow(n, "sqrt_sup_sq_hs", est, se))
            est, se = _pooled_moment(
                _column(reps, f"sum_dy2@{n}"), _column(reps, f"sum_dy4@{n}"), counts
            )
            rows.append(ConvergenceRow(n, "jump_y_diff_sq", est, se))
            rows.append(ConvergenceRow(
                n, "y_tail_expected", float(np.sum(scenario.jump_gammas[n:])), 0.0
            ))
            rows.append(ConvergenceRow(
                n, "diag_tail_sq",
                float(np.sum(scenario.v0_diag[n // 2:] ** 2)), 0.0,
            ))
        else:
            P = ProjectionSpec.level(n, scenario.d)
            rows.append(ConvergenceRow(
                n, "generator_gap_sq", generator_gap_op_norm(gen, P) ** 2, 0.0
            ))

    monotone: dict[str, bool] = {}
    for bound_id in {r.bound_id for r in rows}:
        series = [r for r in rows if r.bound_id == bound_id]
        ok = all(
            b.estimate <= a.estimate + 3.0 * math.hypot(a.stderr, b.stderr)
            for a, b in zip(series, series[1:])
        )
        monotone[bound_id] = ok
    return ConvergenceStudy(scenario=scenario, rows=tuple(rows), monotone=monotone)


# --- presets -----------------------------------------------------------------


def default_scenario(replications: int = 2000, master_seed: int = 1729,
                     truncation: str = "jumps") -> CoupledScenario:
    """Reference eight-dimensional experiment: geometric jump and noise
    spectra, mean-reverting generator from the Brownian covariance spectrum,
    drift-free forward transport, an at-the-money call on the first forward
    coordinate."""
    d = 8
    geo = 0.5 ** np.arange(1, d + 1)
    return CoupledScenario(
        d=d,
        levels=(2, 4, 6),
        horizon=1.0,
        m_points=200,
        rate=1.0,
        jump_gammas=geo,
        q_spectrum=geo,
        generator_kind="sylvester",
        generator_spectrum=-karhunen_loeve_spectrum(d),
        forward_kind="diagonal",
        forward_spectrum=np.zeros(d),
        v0_diag=geo,
        truncation=truncation,
        payoff_kind="call",
        payoff_strike=0.0,
        functional_coordinate=0,
        exercise_time=1.0,
        replications=replications,
        master_seed=master_seed,
    )


def default_generator_scenario(replications: int = 2000, master_seed: int = 1729) -> CoupledScenario:
    return default_scenario(replications=replications, master_seed=master_seed,
                            truncation="generator")
