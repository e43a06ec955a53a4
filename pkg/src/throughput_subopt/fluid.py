"""Dynamic fluid model under the drain/hold construction, with its bound checks."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .network import NetworkSpec
from .paths import ConsistencyError, SimplePath
from .static import StaticAllocation
from .treemap import TreeSolver, compute_CG, first_l1_crossing

SCHEMA_TRAJECTORY = "throughput-subopt/trajectory/v1"
NEG_TOL = 1e-12


class RegimeError(RuntimeError):
    """Epsilon is too large for this network: a feasibility inequality failed."""

    def __init__(self, message: str, time: float | None = None, quantity: str | None = None, **details):
        super().__init__(f"epsilon regime violated: {message}")
        self.time = time
        self.quantity = quantity
        self.details = details


def _l1(v) -> float:
    return float(np.abs(v).sum())


@dataclass(frozen=True)
class FluidConstants:
    sigma_plus: float
    sigma_minus: float
    sigma_zero: float
    alpha: float
    delta1: float
    delta2: float
    a0: float
    c_G: float
    r: np.ndarray = field(compare=False)
    e_dot_r: float
    m1: float
    m2: float
    m3: float
    c_H: float
    l_H: float

    def gamma1(self, eps: float) -> float:
        return 2.0 * max(self.m1, 1.0) * math.sqrt(eps)

    def gamma2(self, eps: float) -> float:
        return self.m3 / 4.0 * abs(math.log(eps))

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["r"] = self.r.tolist()
        return out


def _edge_groups(alloc: StaticAllocation, witness: SimplePath):
    plus = [e for e, s in witness.signs.items() if s > 0]
    minus = [e for e, s in witness.signs.items() if s < 0]
    off_path = [e for e in alloc.basic_edges if e not in witness.signs]
    return plus, minus, off_path


def _psi_tilde_raw(alloc, witness, alpha, delta1, delta2):
    plus, minus, off_path = _edge_groups(alloc, witness)
    psi = np.zeros_like(alloc.psi_star)
    for e in alloc.basic_edges:
        psi[e] = alloc.psi_star[e]
    for e in minus:
        psi[e] = alloc.psi_star[e] + alpha * delta1
    for e in plus:
        psi[e] = alloc.psi_star[e] - delta1
    for e in off_path:
        psi[e] = alloc.psi_star[e] - delta2
    return psi


def compute_constants(alloc: StaticAllocation, witness: SimplePath, spec: NetworkSpec,
                      solver: TreeSolver | None = None) -> FluidConstants:
    if witness.weight >= 0:
        raise ValueError("witness path must have negative weight")
    mu = spec.mu
    plus, minus, off_path = _edge_groups(alloc, witness)
    s_plus = float(sum(mu[e] for e in plus))
    s_minus = float(sum(mu[e] for e in minus))
    s_zero = float(sum(mu[e] for e in off_path))
    alpha = 0.5 * (1.0 + s_plus / s_minus)
    delta1 = 0.5 * min(alloc.psi_star[e] for e in alloc.basic_edges)
    if s_zero > 0:
        delta2 = delta1 * min((alpha * s_minus - s_plus) / (2.0 * s_zero), 1.0 - alpha)
    else:
        delta2 = 0.0
    if solver is None:
        solver = TreeSolver.from_edges(spec.n_classes, spec.n_pools, alloc.basic_edges)
    c_G = compute_CG(solver)
    a0 = delta1 / (2.0 * c_G)

    psi_t = _psi_tilde_raw(alloc, witness, alpha, delta1, delta2)
    r = spec.lam - (mu * psi_t).sum(axis=1)
    e_dot_r = float(r.sum())
    closed_form = delta2 * s_zero + delta1 * s_plus - alpha * delta1 * s_minus
    if abs(e_dot_r - closed_form) > 1e-9 * max(1.0, abs(closed_form)):
        raise ConsistencyError(
            f"drift vector sums to {e_dot_r:.12g} but the closed form gives {closed_form:.12g}"
        )
    if not (0.5 < alpha < 1.0) or e_dot_r >= 0 or not (0 <= delta2 < delta1):
        raise ConsistencyError("constant sign conditions failed for a negative-weight witness")

    m1 = 24.0 / abs(e_dot_r)
    mu_total = float(mu[spec.activities].sum())
    c_H = c_G * mu_total
    l_H = max(1.0 + 1e-6, 2.0 * c_G * mu_total)
    m2 = 7.0 + 2.0 * _l1(r) * m1
    c3 = 1.0 + l_H / (c_H * m2)
    m3 = 1.0 / (c3 * c_H * m2)
    return FluidConstants(s_plus, s_minus, s_zero, alpha, delta1, delta2, a0, c_G,
                          r, e_dot_r, m1, m2, m3, c_H, l_H)


def build_psi_tilde(alloc: StaticAllocation, constants: FluidConstants, witness: SimplePath,
                    beta=None, epsilon: float | None = None, nu=None) -> np.ndarray:
    """Fixed drain allocation: psi* shifted along the witness path, plus ``beta``.

    With ``epsilon`` given, ``|beta| <= epsilon**2`` is enforced. With ``nu`` given,
    column sums are checked against pool capacities.
    """
    psi = _psi_tilde_raw(alloc, witness, constants.alpha, constants.delta1, constants.delta2)
    beta_max = 0.0
    if beta is not None:
        beta = np.asarray(beta, dtype=float)
        beta_max = float(np.abs(beta).max(initial=0.0))
        if epsilon is not None and beta_max > epsilon ** 2 * (1 + 1e-12):
            raise ValueError(f"|beta| = {beta_max:.3g} exceeds epsilon^2 = {epsilon ** 2:.3g}")
        psi = psi + beta
    if np.any(psi < -NEG_TOL):
        raise RegimeError("epsilon not small enough: drain allocation has a negative entry",
                          quantity="psi_tilde")
    if nu is not None:
        cols = psi.sum(axis=0)
        margin = 1e-12 + psi.shape[0] * beta_max
        if np.any(cols > np.asarray(nu) + margin):
            raise RegimeError("epsilon not small enough: drain allocation exceeds pool capacity",
                              quantity="psi_tilde")
    return psi


@dataclass(frozen=True, eq=False)
class Perturbation:
    """Piecewise-linear W through (times, values), and a constant theta."""

    times: np.ndarray
    values: np.ndarray
    theta: np.ndarray
    epsilon: float
    sigma: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        th = np.asarray(self.theta, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "theta", th)
        if t.ndim != 1 or t.size < 2 or v.shape[0] != t.size:
            raise ValueError("perturbation needs at least two breakpoints with one value row each")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0) or t[-1] < self.sigma:
            raise ValueError("breakpoints must start at 0, increase, and reach sigma")
        # the l1 norm is convex, so checking breakpoints covers each linear piece
        norms = np.abs(v).sum(axis=1)
        if np.any(norms > self.epsilon * (1 + 1e-12)):
            raise ValueError("||W(t)|| exceeds epsilon")
        if _l1(th) > self.epsilon * (1 + 1e-12):
            raise ValueError("||theta|| exceeds epsilon")

    def segment(self, t: float):
        """(end time, slope) of the linear piece containing t."""
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = min(max(k, 0), self.times.size - 2)
        t0, t1 = self.times[k], self.times[k + 1]
        return float(t1), (self.values[k + 1] - self.values[k]) / (t1 - t0)

    def value(self, t: float) -> np.ndarray:
        return np.array([np.interp(t, self.times, col) for col in self.values.T])


def zero_perturbation(n_cls: int, n_pools: int, epsilon: float, sigma: float) -> Perturbation:
    return Perturbation(np.array([0.0, sigma]), np.zeros((2, n_cls)), np.zeros(n_pools), epsilon, sigma)


def sinusoid_perturbation(n_cls: int, n_pools: int, epsilon: float, sigma: float,
                          period: float = 0.1, points_per_period: int = 64, theta=None) -> Perturbation:
    """W_i(t) = 0.9 eps sin(2 pi t / period + phase_i) / I, so ||W|| <= 0.9 eps."""
    n_pts = max(2, int(math.ceil(sigma / period * points_per_period)) + 1)
    t = np.linspace(0.0, sigma, n_pts)
    phase = 2 * np.pi * np.arange(n_cls) / n_cls
    w = 0.9 * epsilon / n_cls * np.sin(2 * np.pi * t[:, None] / period + phase[None, :])
    w -= w[0]
    # re-centering can push the norm up; rescale back into the envelope
    norms = np.abs(w).sum(axis=1)
    w *= min(1.0, 0.9 * epsilon / max(norms.max(), 1e-300))
    th = np.zeros(n_pools) if theta is None else theta
    return Perturbation(t, w, th, epsilon, sigma)


def random_walk_perturbation(n_cls: int, n_pools: int, epsilon: float, sigma: float,
                             seed=None, dt: float | None = None, theta=None) -> Perturbation:
    """Seeded Gaussian walk started at zero, clipped to ||W|| <= 0.9 eps."""
    rng = np.random.default_rng(seed)
    dt = dt if dt is not None else max(sigma / 2000, 1e-6)
    n_pts = int(math.ceil(sigma / dt)) + 1
    t = np.linspace(0.0, sigma, n_pts)
    scale = epsilon * math.sqrt(t[1] - t[0])
    w = np.zeros((n_pts, n_cls))
    cap = 0.9 * epsilon
    for k in range(1, n_pts):
        nxt = w[k - 1] + scale * rng.standard_normal(n_cls)
        norm = _l1(nxt)
        w[k] = nxt if norm <= cap else nxt * (cap / norm)
    th = np.zeros(n_pools) if theta is None else theta
    return Perturbation(t, w, th, epsilon, sigma)


def make_perturbation(kind: str, n_cls: int, n_pools: int, epsilon: float, sigma: float,
                      seed=None) -> Perturbation:
    if kind == "zero":
        return zero_perturbation(n_cls, n_pools, epsilon, sigma)
    if kind == "sinusoid":
        return sinusoid_perturbation(n_cls, n_pools, epsilon, sigma)
    if kind == "random-walk":
        return random_walk_perturbation(n_cls, n_pools, epsilon, sigma, seed=seed)
    raise ValueError(f"unknown perturbation kind {kind!r}; choose zero, sinusoid or random-walk")


def _positive_measure(f0: float, f1: float, length: float) -> float:
    """Measure of {s in [0, length]: f(s) > 0} for f affine with endpoint values f0, f1."""
    if length <= 0:
        return 0.0
    if f0 > 0 and f1 > 0:
        return length
    if f0 <= 0 and f1 <= 0:
        return 0.0
    root = length * f0 / (f0 - f1)
    return length - root if f1 > 0 else root


@dataclass(eq=False)
class FluidTrajectory:
    tau: float
    tau_tilde_fired: bool
    # alternating [0, zeta_1, eta_1, zeta_2, ...]; the last entry may be cut by tau
    breakpoints: list
    t: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    Psi: np.ndarray
    phase: np.ndarray
    interval: np.ndarray
    busy_measure: float
    sup_dev: float
    busy_total: float
    sup_dev_total: float
    cutoff: float
    K: int
    theta: np.ndarray

    def drain_intervals(self):
        """(start, end, completed) for every drain interval."""
        b = self.breakpoints
        out = []
        for k in range(0, len(b), 2):
            end = b[k + 1] if k + 1 < len(b) else self.tau
            out.append((b[k], end, k + 1 < len(b)))
        return out

    def hold_intervals(self):
        b = self.breakpoints
        out = []
        for k in range(1, len(b), 2):
            end = b[k + 1] if k + 1 < len(b) else self.tau
            out.append((b[k], end, k + 1 < len(b)))
        return out

    def write_csv(self, path, every: int = 1) -> None:
        n_cls, n_pools = self.X.shape[1], self.Z.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# schema: {SCHEMA_TRAJECTORY}\n")
            w = csv.writer(fh)
            w.writerow(["t"] + [f"X_{i + 1}" for i in range(n_cls)] + [f"Y_{i + 1}" for i in range(n_cls)]
                       + [f"Z_{j + 1}" for j in range(n_pools)] + ["eY", "phase", "k"])
            idx = list(range(0, self.t.size, max(1, every)))
            if idx and idx[-1] != self.t.size - 1:
                idx.append(self.t.size - 1)
            for r in idx:
                w.writerow([repr(float(self.t[r]))] + [repr(float(x)) for x in self.X[r]]
                           + [repr(float(x)) for x in self.Y[r]] + [repr(float(x)) for x in self.Z[r]]
                           + [repr(float(self.Y[r].sum())), self.phase[r], int(self.interval[r])])


def integrate_trajectory(spec: NetworkSpec, alloc: StaticAllocation, constants: FluidConstants,
                         psi_tilde, pert: Perturbation, i0: int = 0, j0: int = 0,
                         step: float | None = None, solver: TreeSolver | None = None) -> FluidTrajectory:
    eps = pert.epsilon
    sigma = pert.sigma
    if step is None:
        step = min(1e-3, eps / 10)
    if step <= 0:
        raise ValueError("step must be positive")
    if solver is None:
        solver = TreeSolver.from_edges(spec.n_classes, spec.n_pools, alloc.basic_edges)
    lam, mu, nu = spec.lam, spec.mu, spec.nu
    theta = pert.theta
    x_star = alloc.x_star
    cap = nu + theta
    cap_e = float(cap.sum())
    sqrt_eps = math.sqrt(eps)
    cutoff = min(sigma, constants.gamma2(eps))
    psi_tilde = np.asarray(psi_tilde, dtype=float)
    drain_rows = psi_tilde.sum(axis=1)
    drain_Z = cap - psi_tilde.sum(axis=0)
    drain_drift = lam - (mu * psi_tilde).sum(axis=1)

    rec_t, rec_X, rec_Y, rec_Z, rec_P, rec_ph, rec_k = [], [], [], [], [], [], []
    acc = {"busy": 0.0, "busy_total": 0.0, "sup": 0.0, "sup_total": 0.0}

    def record(t, X, Y, Z, P, ph, k):
        rec_t.append(t)
        rec_X.append(X.copy())
        rec_Y.append(Y.copy())
        rec_Z.append(Z.copy())
        rec_P.append(P.copy())
        rec_ph.append(ph)
        rec_k.append(k)

    def account(t0, h, eY0, eY1, X0, X1):
        acc["busy_total"] += _positive_measure(eY0, eY1, h)
        d0, d1 = _l1(X0 - x_star), _l1(X1 - x_star)
        acc["sup_total"] = max(acc["sup_total"], d0, d1)
        if t0 < cutoff:
            hc = min(h, cutoff - t0)
            f1c = eY0 + (eY1 - eY0) * (hc / h) if h > 0 else eY0
            acc["busy"] += _positive_measure(eY0, f1c, hc)
            Xc = X0 + (X1 - X0) * (hc / h) if h > 0 else X0
            acc["sup"] = max(acc["sup"], d0, _l1(Xc - x_star))

    def hold_state(X):
        excess = float(X.sum()) - cap_e
        Y = np.zeros_like(X)
        Z = np.zeros_like(cap)
        if excess > 0:
            Y[i0] = excess
        else:
            Z[j0] = -excess
        P = solver.solve(X - Y, cap - Z)
        return Y, Z, P

    if np.any(drain_Z < -NEG_TOL):
        raise RegimeError("idle capacity negative under the drain allocation", 0.0, "Z")

    t = 0.0
    X = x_star + pert.values[0]
    k = 1
    phase = "drain"
    anchor = X.copy()
    breakpoints = [0.0]
    tau_tilde = False
    if _l1(X - x_star) >= sqrt_eps:
        tau_tilde = True

    while t < sigma and not tau_tilde:
        seg_end, w_slope = pert.segment(t)
        seg_end = min(seg_end, sigma)
        if phase == "drain":
            d = drain_drift + w_slope
            h = seg_end - t
            Y0 = X - drain_rows
            if t == breakpoints[-1]:
                record(t, X, Y0, drain_Z, psi_tilde, phase, k)
            s_evt, evt = h, None
            ed = float(d.sum())
            if ed < 0:
                s = (float(anchor.sum()) - 7 * eps - float(X.sum())) / ed
                if s <= s_evt:
                    s_evt, evt = max(s, 0.0), "zeta"
            s = first_l1_crossing(X - x_star, d, sqrt_eps, h)
            if s is not None and s <= s_evt:
                s_evt, evt = s, "tau"
            X1 = X + s_evt * d
            Y1 = X1 - drain_rows
            for Yv, tv in ((Y0, t), (Y1, t + s_evt)):
                if np.any(Yv < -NEG_TOL * max(1.0, _l1(X))):
                    raise RegimeError(f"queue length negative in drain at t = {tv:.6g}", tv, "Y",
                                      Y=Yv.tolist())
            account(t, s_evt, float(Y0.sum()), float(Y1.sum()), X, X1)
            t += s_evt
            X = X1
            record(t, X, Y1, drain_Z, psi_tilde, phase, k)
            if evt == "tau":
                tau_tilde = True
            elif evt == "zeta":
                breakpoints.append(t)
                phase = "hold"
                anchor = X.copy()
        else:
            Y, Z, P = hold_state(X)
            if t == breakpoints[-1]:
                record(t, X, Y, Z, P, phase, k)
            if np.any(P < -NEG_TOL * max(1.0, _l1(X))):
                raise RegimeError(f"in-service mass negative in hold at t = {t:.6g}", t, "Psi",
                                  Psi=P.tolist())
            h = min(step, seg_end - t)
            d = lam - (mu * P).sum(axis=1) + w_slope
            s_evt, evt = h, None
            s = first_l1_crossing(X - anchor, d, 3 * eps, h)
            if s is not None:
                s_evt, evt = s, "eta"
            s = first_l1_crossing(X - x_star, d, sqrt_eps, h)
            if s is not None and s <= s_evt:
                s_evt, evt = s, "tau"
            X1 = X + s_evt * d
            account(t, s_evt, max(float(X.sum()) - cap_e, 0.0), max(float(X1.sum()) - cap_e, 0.0), X, X1)
            t += s_evt
            X = X1
            Y1, Z1, P1 = hold_state(X)
            record(t, X, Y1, Z1, P1, phase, k)
            if evt == "tau":
                tau_tilde = True
            elif evt == "eta":
                breakpoints.append(t)
                phase = "drain"
                k += 1
                anchor = X.copy()

    tau = t if tau_tilde else sigma
    # the interval running at tau is cut short whether it is a drain or a hold
    K = len(breakpoints) // 2
    return FluidTrajectory(
        tau=tau,
        tau_tilde_fired=tau_tilde,
        breakpoints=breakpoints,
        t=np.array(rec_t),
        X=np.array(rec_X),
        Y=np.array(rec_Y),
        Z=np.array(rec_Z),
        Psi=np.array(rec_P),
        phase=np.array(rec_ph),
        interval=np.array(rec_k),
        busy_measure=acc["busy"],
        sup_dev=acc["sup"],
        busy_total=acc["busy_total"],
        sup_dev_total=acc["sup_total"],
        cutoff=cutoff,
        K=K,
        theta=theta,
    )


def verify_theorem3(traj: FluidTrajectory, constants: FluidConstants, epsilon: float) -> dict:
    """Pass/fail per bound with the measured values."""
    g1 = constants.gamma1(epsilon)
    g2 = constants.gamma2(epsilon)
    drains = traj.drain_intervals()
    holds = traj.hold_intervals()
    drain_len = [e - s for s, e, done in drains if done]
    hold_len = [(k + 1, e - s) for k, (s, e, done) in enumerate(holds) if done]
    checks = {
        "busy_measure": {"value": traj.busy_measure, "bound": g1, "pass": traj.busy_measure <= g1},
        "sup_dev": {"value": traj.sup_dev, "bound": g1, "pass": traj.sup_dev <= g1},
        "drain_lengths": {
            "value": max(drain_len, default=0.0),
            "bound": constants.m1 * epsilon,
            "pass": all(x <= constants.m1 * epsilon for x in drain_len),
        },
        "hold_lengths": {
            "value": min((L * k for k, L in hold_len), default=None),
            "bound": constants.m3,
            "pass": all(L >= constants.m3 / k for k, L in hold_len),
        },
    }
    return {
        "epsilon": epsilon,
        "gamma1": g1,
        "gamma2": g2,
        "window": traj.cutoff,
        "tau": traj.tau,
        "tau_tilde_fired": traj.tau_tilde_fired,
        "K": traj.K,
        "busy_total": traj.busy_total,
        "checks": checks,
        "all_pass": all(c["pass"] for c in checks.values()),
    }
