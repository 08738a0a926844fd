"""Asymptotic mean square error and phase boundary of L1-L1 reconstruction.

The estimator under study is

    x_hat = argmin_x  ||y - A x||_1 + lam ||x||_1

for y = A x0 + w with iid Gaussian A (variance 1/N), Bernoulli-Gaussian
signal x0 (density rho_x, variance sigma2_x) and Bernoulli-Gaussian noise w
(density rho_w, variance sigma2_w), in the proportional limit
M/N -> alpha. Two coupled descriptions are implemented:

* a four-variable fixed point (mse, chi, m_hat, chi_hat) whose solution
  gives the per-component mean square error of the estimate, and
* a two-variable fixed point (A, chi_hat) valid inside the perfect
  reconstruction phase, whose stability condition locates the phase
  boundary.

Both are solved by damped forward iteration. The boundary is then pinned
by bisection in rho_x or alpha, and a derivative-free line search tunes
the penalty weight lam.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Literal

from .special import gauss_pdf, q_function, r_lambda, s_func

__all__ = [
    "SystemParams",
    "SolverConfig",
    "DEFAULT_SOLVER",
    "FixedPointState",
    "ThresholdState",
    "FixedPointError",
    "BracketError",
    "ObjectiveProbeError",
    "LambdaOptimum",
    "initial_state",
    "iterate_mse_step",
    "solve_mse_fixed_point",
    "solve_threshold_fixed_point",
    "threshold_state_for",
    "find_critical_rho_x",
    "find_critical_alpha",
    "optimize_lambda",
]

_SQRT2 = math.sqrt(2.0)

# Divergence verdict: m_hat grows without bound and the error collapses.
_PERFECT_M_HAT = 1e12
_PERFECT_MSE = 1e-24

# Consecutive retries with a halved step before giving up on a sweep that
# produced a non-finite value.
_MAX_DAMPING_RETRIES = 4

_SWEEP_ERRORS = (ValueError, OverflowError, ZeroDivisionError)


def _check_unit_interval(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")


def _check_positive(name: str, value: float) -> None:
    if not (value > 0.0 and math.isfinite(value)):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class SystemParams:
    """Ensemble description for one reconstruction problem family.

    alpha is the measurement ratio M/N, lam the penalty weight, rho_x and
    rho_w the densities of the signal and the noise, sigma2_x and sigma2_w
    the variances of their Gaussian components.
    """

    alpha: float
    lam: float
    rho_x: float
    rho_w: float
    sigma2_x: float = 1.0
    sigma2_w: float = 1.0

    def __post_init__(self) -> None:
        _check_positive("alpha", self.alpha)
        _check_positive("lam", self.lam)
        _check_unit_interval("rho_x", self.rho_x)
        _check_unit_interval("rho_w", self.rho_w)
        _check_positive("sigma2_x", self.sigma2_x)
        _check_positive("sigma2_w", self.sigma2_w)

    @property
    def signal_power(self) -> float:
        """Per-component second moment of the signal, rho_x * sigma2_x."""
        return self.rho_x * self.sigma2_x


@dataclass(frozen=True)
class SolverConfig:
    """Iteration and root-finding knobs shared by the solvers."""

    damping: float = 0.5
    rel_tol: float = 1e-12
    max_iters: int = 200_000
    lambda_bracket: tuple[float, float] = (1e-3, 1e3)
    bisection_tol: float = 1e-6

    def __post_init__(self) -> None:
        if not 0.0 <= self.damping < 1.0:
            raise ValueError(f"damping must lie in [0, 1), got {self.damping!r}")
        _check_positive("rel_tol", self.rel_tol)
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be at least 1, got {self.max_iters!r}")
        lo, hi = self.lambda_bracket
        if not (0.0 < lo < hi and math.isfinite(hi)):
            raise ValueError(f"lambda_bracket must satisfy 0 < lo < hi, got {self.lambda_bracket!r}")
        _check_positive("bisection_tol", self.bisection_tol)


DEFAULT_SOLVER = SolverConfig()


@dataclass(frozen=True)
class FixedPointState:
    """One iterate of the four-variable mean square error fixed point.

    diag_m is the signal-estimate overlap and diag_q the estimate
    self-overlap; at any fixed point they satisfy
    mse = signal_power - 2 diag_m + diag_q. residual is the largest
    relative change of the four variables in the producing sweep. perfect
    marks the divergence verdict: m_hat runs away while mse collapses, the
    signature of exact reconstruction.
    """

    mse: float
    chi: float
    m_hat: float
    chi_hat: float
    diag_m: float
    diag_q: float
    residual: float
    converged: bool
    iterations: int
    perfect: bool = False


@dataclass(frozen=True)
class ThresholdState:
    """Fixed point of the two-variable system valid at perfect reconstruction.

    condition_residual is positive inside the perfect phase and crosses
    zero at the boundary.
    """

    A: float
    chi_hat: float
    condition_residual: float
    converged: bool
    iterations: int


class FixedPointError(RuntimeError):
    """Iteration exhausted its budget or could not be stabilized."""

    def __init__(self, message: str, state: object = None) -> None:
        super().__init__(message)
        self.state = state


class BracketError(ValueError):
    """Bisection endpoints do not straddle a sign change."""


class ObjectiveProbeError(RuntimeError):
    """The penalty-weight search hit an unevaluable probe point."""

    def __init__(self, message: str, lam: float) -> None:
        super().__init__(message)
        self.lam = lam


def _relative_change(new: float, old: float) -> float:
    return abs(new - old) / max(abs(new), abs(old), 1e-300)


def _interior_moment_pair(t: float) -> float:
    """s(t) + 2 Q(t), the chi_hat kernel; t = +inf is an exact zero."""
    if t == math.inf:
        return 0.0
    return s_func(t) + 2.0 * q_function(t)


def _mse_terms(p: SystemParams, m_hat: float, chi_hat: float) -> tuple[float, float, float]:
    """The three nonnegative contributions to the mse update.

    The naive arrangement subtracts O(1) quantities and bottoms out near
    1e-17 from rounding; regrouping into provably nonnegative terms lets
    the perfect phase reach exact zero. Term 1 uses the identity
    erf(b/sqrt2) - 2 b phi(b) + 2 b^2 Q(b) = b^2 (s(b) + 2 Q(b)), and
    term 2 evaluates r_lambda(lam, H)/H at the widened variance
    H = chi_hat + sigma2_x m_hat^2 so that both r_lambda calls share one
    branch selection.
    """
    wide = chi_hat + p.sigma2_x * m_hat * m_hat
    b = p.lam / math.sqrt(wide)
    inv_m2 = 1.0 / (m_hat * m_hat)
    on_support = 0.0
    on_support_tail = 0.0
    if p.rho_x > 0.0:
        on_support = p.rho_x * p.sigma2_x * b * b * _interior_moment_pair(b)
        on_support_tail = -2.0 * p.rho_x * chi_hat * (r_lambda(p.lam, wide) / wide) * inv_m2
    off_support = 0.0
    if p.rho_x < 1.0:
        off_support = -2.0 * (1.0 - p.rho_x) * r_lambda(p.lam, chi_hat) * inv_m2
    return on_support, on_support_tail, off_support


def _diagnostics(p: SystemParams, m_hat: float, chi_hat: float) -> tuple[float, float]:
    """Overlap diagnostics (diag_m, diag_q) at conjugate values (m_hat, chi_hat).

    diag_m = 2 sigma2_x rho_x Q(b) with b = lam / sqrt(chi_hat + sigma2_x m_hat^2);
    diag_q = -(2/m_hat^2) [(1 - rho_x) r_lambda(chi_hat) + rho_x r_lambda(chi_hat + sigma2_x m_hat^2)].
    At a fixed point, mse = signal_power - 2 diag_m + diag_q.
    """
    wide = chi_hat + p.sigma2_x * m_hat * m_hat
    b = p.lam / math.sqrt(wide)
    diag_m = 2.0 * p.sigma2_x * p.rho_x * q_function(b)
    acc = 0.0
    if p.rho_x < 1.0:
        acc += (1.0 - p.rho_x) * r_lambda(p.lam, chi_hat)
    if p.rho_x > 0.0:
        acc += p.rho_x * r_lambda(p.lam, wide)
    diag_q = -2.0 * acc / (m_hat * m_hat)
    return diag_m, diag_q


def initial_state(params: SystemParams) -> FixedPointState:
    """Standard starting iterate: the error of the all-zero estimate."""
    diag_m, diag_q = _diagnostics(params, 1.0, params.alpha)
    return FixedPointState(
        mse=params.signal_power,
        chi=1.0,
        m_hat=1.0,
        chi_hat=params.alpha,
        diag_m=diag_m,
        diag_q=diag_q,
        residual=math.inf,
        converged=False,
        iterations=0,
    )


def iterate_mse_step(
    params: SystemParams,
    state: FixedPointState,
    damping: float = 0.5,
) -> FixedPointState:
    """One damped sweep of the four update equations.

    The sweep is sequential: chi uses the incoming m_hat and chi_hat, the
    conjugate pair uses the fresh mse and chi. Each variable is blended as
    new = (1 - damping) * update + damping * old. Raises the underlying
    ValueError or OverflowError if the incoming state has diverged beyond
    floating point range.
    """
    p = params
    keep = damping
    mix = 1.0 - damping

    mse_raw = math.fsum(_mse_terms(p, state.m_hat, state.chi_hat))
    mse = mix * mse_raw + keep * state.mse

    wide = state.chi_hat + p.sigma2_x * state.m_hat * state.m_hat
    acc = 0.0
    if p.rho_x < 1.0:
        acc += (1.0 - p.rho_x) * q_function(p.lam / math.sqrt(state.chi_hat))
    if p.rho_x > 0.0:
        acc += p.rho_x * q_function(p.lam / math.sqrt(wide))
    chi_raw = 2.0 * acc / state.m_hat
    chi = mix * chi_raw + keep * state.chi

    t_clean = chi / math.sqrt(mse) if mse > 0.0 else math.inf
    t_noisy = chi / math.sqrt(mse + p.sigma2_w)
    m_acc = 0.0
    h_acc = 0.0
    if p.rho_w < 1.0:
        weight = p.alpha * (1.0 - p.rho_w)
        m_acc += weight * math.erf(t_clean / _SQRT2)
        h_acc += weight * _interior_moment_pair(t_clean)
    if p.rho_w > 0.0:
        weight = p.alpha * p.rho_w
        m_acc += weight * math.erf(t_noisy / _SQRT2)
        h_acc += weight * _interior_moment_pair(t_noisy)
    m_hat = mix * (m_acc / chi) + keep * state.m_hat
    chi_hat = mix * h_acc + keep * state.chi_hat

    residual = max(
        _relative_change(mse, state.mse),
        _relative_change(chi, state.chi),
        _relative_change(m_hat, state.m_hat),
        _relative_change(chi_hat, state.chi_hat),
    )
    diag_m, diag_q = _diagnostics(p, m_hat, chi_hat)
    return FixedPointState(
        mse=mse,
        chi=chi,
        m_hat=m_hat,
        chi_hat=chi_hat,
        diag_m=diag_m,
        diag_q=diag_q,
        residual=residual,
        converged=False,
        iterations=state.iterations + 1,
    )


def _state_is_finite(state: FixedPointState) -> bool:
    return (
        math.isfinite(state.mse)
        and math.isfinite(state.chi)
        and math.isfinite(state.m_hat)
        and math.isfinite(state.chi_hat)
    )


def solve_mse_fixed_point(
    params: SystemParams,
    cfg: SolverConfig = DEFAULT_SOLVER,
    start: FixedPointState | None = None,
) -> FixedPointState:
    """Iterate the mse fixed point to convergence or a divergence verdict.

    Returns a state with converged=True when the largest relative change
    falls below cfg.rel_tol, or with perfect=True when m_hat exceeds 1e12
    while mse has collapsed below 1e-24, the runaway that signals exact
    reconstruction. A sweep producing a non-finite value triggers up to
    four automatic step-size halvings; exhausting those or the iteration
    budget raises FixedPointError carrying the last finite state.
    """
    state = initial_state(params) if start is None else start
    damping = cfg.damping
    retries = 0
    for _ in range(cfg.max_iters):
        if state.m_hat > _PERFECT_M_HAT and state.mse < _PERFECT_MSE:
            return replace(state, perfect=True)
        try:
            candidate = iterate_mse_step(params, state, damping)
            bad = not _state_is_finite(candidate)
        except _SWEEP_ERRORS:
            bad = True
        if bad:
            if retries >= _MAX_DAMPING_RETRIES:
                raise FixedPointError(
                    "iteration produced non-finite values despite damping increases",
                    state,
                )
            retries += 1
            damping = 1.0 - 0.5 * (1.0 - damping)
            continue
        state = candidate
        if state.residual <= cfg.rel_tol:
            return replace(state, converged=True)
    raise FixedPointError(
        f"no convergence after {cfg.max_iters} sweeps "
        f"(last residual {state.residual:.3e})",
        state,
    )


def _threshold_sweep(
    alpha: float,
    lam: float,
    rho_x: float,
    rho_w: float,
    a_value: float,
    chi_hat: float,
    damping: float,
) -> tuple[float, float, float]:
    keep = damping
    mix = 1.0 - damping
    numer = 0.0
    if rho_x > 0.0:
        numer += rho_x * (lam * lam + chi_hat)
    if rho_x < 1.0:
        numer -= 2.0 * (1.0 - rho_x) * r_lambda(lam, chi_hat)
    denom = 2.0 * (1.0 - rho_x) * q_function(lam / math.sqrt(chi_hat)) + rho_x
    a_new = mix * (numer / (denom * denom)) + keep * a_value

    cut = 1.0 / math.sqrt(a_new)
    h_acc = alpha * rho_w
    if rho_w < 1.0:
        h_acc += alpha * (1.0 - rho_w) * _interior_moment_pair(cut)
    chi_hat_new = mix * h_acc + keep * chi_hat

    residual = max(
        _relative_change(a_new, a_value),
        _relative_change(chi_hat_new, chi_hat),
    )
    return a_new, chi_hat_new, residual


def solve_threshold_fixed_point(
    alpha: float,
    lam: float,
    rho_x: float,
    rho_w: float,
    cfg: SolverConfig = DEFAULT_SOLVER,
) -> ThresholdState:
    """Solve the two-variable fixed point and evaluate the boundary condition.

    The system involves no variance parameters, so the returned state (and
    hence every phase boundary) is independent of sigma2_x and sigma2_w.
    condition_residual > 0 means (alpha, lam, rho_x, rho_w) sits inside the
    perfect reconstruction phase.
    """
    _check_positive("alpha", alpha)
    _check_positive("lam", lam)
    _check_unit_interval("rho_x", rho_x)
    _check_unit_interval("rho_w", rho_w)

    a_value = 1.0
    chi_hat = alpha
    damping = cfg.damping
    retries = 0
    iterations = 0
    converged = False
    while iterations < cfg.max_iters:
        try:
            a_new, chi_hat_new, residual = _threshold_sweep(
                alpha, lam, rho_x, rho_w, a_value, chi_hat, damping
            )
            bad = not (math.isfinite(a_new) and math.isfinite(chi_hat_new) and a_new > 0.0)
        except _SWEEP_ERRORS:
            bad = True
        if bad:
            if retries >= _MAX_DAMPING_RETRIES:
                raise FixedPointError(
                    "threshold iteration produced non-finite values despite damping increases",
                    ThresholdState(a_value, chi_hat, math.nan, False, iterations),
                )
            retries += 1
            damping = 1.0 - 0.5 * (1.0 - damping)
            continue
        iterations += 1
        a_value, chi_hat = a_new, chi_hat_new
        if residual <= cfg.rel_tol:
            converged = True
            break
    if not converged:
        raise FixedPointError(
            f"threshold fixed point not converged after {cfg.max_iters} sweeps",
            ThresholdState(a_value, chi_hat, math.nan, False, iterations),
        )

    # erf form of 1 - 2 Q avoids cancellation for small arguments
    clean_mass = math.erf(1.0 / math.sqrt(2.0 * a_value))
    support_mass = 2.0 * (1.0 - rho_x) * q_function(lam / math.sqrt(chi_hat)) + rho_x
    condition_residual = alpha * (1.0 - rho_w) * clean_mass - support_mass
    return ThresholdState(
        A=a_value,
        chi_hat=chi_hat,
        condition_residual=condition_residual,
        converged=True,
        iterations=iterations,
    )


def threshold_state_for(params: SystemParams, cfg: SolverConfig = DEFAULT_SOLVER) -> ThresholdState:
    """Threshold fixed point for a full parameter set (variances ignored)."""
    return solve_threshold_fixed_point(params.alpha, params.lam, params.rho_x, params.rho_w, cfg)


def _bisect(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    f_lo: float,
    tol: float,
) -> float:
    """Bisection for a sign change bracketed by (lo, hi); f_lo = f(lo)."""
    positive_at_lo = f_lo > 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (f(mid) > 0.0) == positive_at_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def find_critical_rho_x(
    alpha: float,
    lam: float,
    rho_w: float,
    cfg: SolverConfig = DEFAULT_SOLVER,
) -> float:
    """Largest signal density with perfect reconstruction, by bisection.

    The boundary condition residual is positive on the sparse side and
    negative on the dense side; the root is bracketed on (1e-6, 1 - 1e-6)
    and pinned to cfg.bisection_tol.
    """
    lo, hi = 1e-6, 1.0 - 1e-6

    def residual_at(rho_x: float) -> float:
        return solve_threshold_fixed_point(alpha, lam, rho_x, rho_w, cfg).condition_residual

    f_lo = residual_at(lo)
    f_hi = residual_at(hi)
    if not (f_lo > 0.0 > f_hi):
        raise BracketError(
            "no phase boundary in range: condition residual is "
            f"{f_lo:.6e} at rho_x={lo:g} and {f_hi:.6e} at rho_x={hi:g}"
        )
    return _bisect(residual_at, lo, hi, f_lo, cfg.bisection_tol)


def find_critical_alpha(
    lam: float,
    rho_x: float,
    rho_w: float,
    cfg: SolverConfig = DEFAULT_SOLVER,
) -> float:
    """Smallest measurement ratio with perfect reconstruction, by bisection.

    The condition residual is negative at alpha = 1e-4 and must be positive
    at alpha = 1 for a boundary to exist in the physical range.
    """
    lo, hi = 1e-4, 1.0

    def residual_at(alpha: float) -> float:
        return solve_threshold_fixed_point(alpha, lam, rho_x, rho_w, cfg).condition_residual

    f_lo = residual_at(lo)
    f_hi = residual_at(hi)
    if not (f_lo < 0.0 < f_hi):
        raise BracketError(
            "no phase boundary in range: condition residual is "
            f"{f_lo:.6e} at alpha={lo:g} and {f_hi:.6e} at alpha={hi:g}"
        )
    return _bisect(residual_at, lo, hi, f_lo, cfg.bisection_tol)


@dataclass(frozen=True)
class LambdaOptimum:
    """Result of the penalty-weight line search."""

    lambda_star: float
    objective_value: float


Objective = Literal["critical-rho-x", "critical-alpha", "mse"]


def optimize_lambda(
    objective: Objective,
    *,
    alpha: float | None = None,
    rho_x: float | None = None,
    rho_w: float,
    sigma2_x: float = 1.0,
    sigma2_w: float = 1.0,
    cfg: SolverConfig = DEFAULT_SOLVER,
) -> LambdaOptimum:
    """Golden-section search for the best penalty weight.

    Three objectives are supported: "critical-rho-x" maximizes the
    boundary density at fixed alpha, "critical-alpha" minimizes the
    boundary measurement ratio at fixed rho_x, and "mse" minimizes the
    reconstruction error at fixed (alpha, rho_x). The search runs on
    log(lam) over cfg.lambda_bracket and stops when the bracket is
    narrower than cfg.bisection_tol.

    Probe weights whose perfect phase is empty (no boundary in range)
    score as the worst possible objective rather than failing: an empty
    phase is a legitimate, maximally bad outcome for a weight. Probes
    where the underlying solver itself fails raise ObjectiveProbeError
    tagged with the offending weight.
    """
    if objective == "critical-rho-x":
        if alpha is None:
            raise ValueError("objective 'critical-rho-x' requires alpha")

        def score(lam: float) -> tuple[float, float]:
            try:
                value = find_critical_rho_x(alpha, lam, rho_w, cfg)
            except BracketError:
                return 0.0, 0.0
            except FixedPointError as exc:
                raise ObjectiveProbeError(
                    f"threshold solve failed at probe lam={lam:.6g}: {exc}", lam
                ) from exc
            return value, value

    elif objective == "critical-alpha":
        if rho_x is None:
            raise ValueError("objective 'critical-alpha' requires rho_x")

        def score(lam: float) -> tuple[float, float]:
            try:
                value = find_critical_alpha(lam, rho_x, rho_w, cfg)
            except BracketError:
                # empty perfect phase: worse than any attainable ratio
                return -2.0, math.nan
            except FixedPointError as exc:
                raise ObjectiveProbeError(
                    f"threshold solve failed at probe lam={lam:.6g}: {exc}", lam
                ) from exc
            return -value, value

    elif objective == "mse":
        if alpha is None or rho_x is None:
            raise ValueError("objective 'mse' requires alpha and rho_x")

        def score(lam: float) -> tuple[float, float]:
            params = SystemParams(
                alpha=alpha,
                lam=lam,
                rho_x=rho_x,
                rho_w=rho_w,
                sigma2_x=sigma2_x,
                sigma2_w=sigma2_w,
            )
            try:
                state = solve_mse_fixed_point(params, cfg)
            except FixedPointError as exc:
                raise ObjectiveProbeError(
                    f"mse solve failed at probe lam={lam:.6g}: {exc}", lam
                ) from exc
            value = 0.0 if state.perfect else state.mse
            return -value, value

    else:
        raise ValueError(f"unknown objective {objective!r}")

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    lo = math.log(cfg.lambda_bracket[0])
    hi = math.log(cfg.lambda_bracket[1])
    best_score = -math.inf
    best = LambdaOptimum(lambda_star=math.nan, objective_value=math.nan)

    def probe(u: float) -> float:
        nonlocal best_score, best
        s, value = score(math.exp(u))
        if s > best_score:
            best_score = s
            best = LambdaOptimum(lambda_star=math.exp(u), objective_value=value)
        return s

    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc = probe(c)
    fd = probe(d)
    while hi - lo > cfg.bisection_tol:
        if fc > fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = probe(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = probe(d)
    probe(0.5 * (lo + hi))

    if not math.isfinite(best.lambda_star) or math.isnan(best.objective_value):
        raise ObjectiveProbeError(
            "no probe weight produced a finite objective", math.exp(0.5 * (lo + hi))
        )
    return best
