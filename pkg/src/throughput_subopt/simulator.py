"""Event-driven simulation of the n-th system under the drain/hold control policy.

The policy is kept apart from the randomness: ``PolicyEngine`` consumes a stream
of arrival and departure events and decides the service assignment, so the same
engine drives both a random run and the replay of a recorded event log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fluid import FluidConstants, RegimeError, build_psi_tilde
from .network import ScaledSystem
from .paths import SimplePath
from .static import StaticAllocation
from .treemap import TreeSolver, first_l1_crossing

DRAIN, HOLD, POST = "drain", "hold", "post-tau"
ARRIVAL_KINDS = ("exponential", "deterministic", "uniform")
_BLOCK = 4096


class ScaleError(RegimeError):
    """n is too small for the rounded drain allocation to meet its bounds."""


def eps_n(n: int, scale: float = 1.0) -> float:
    return scale * math.log(n) / math.sqrt(n)


def derive_seed(base_seed: int, n: int, rep: int) -> int:
    """Stable per-run seed: first 64-bit word of SeedSequence([base_seed, n, rep])."""
    ss = np.random.SeedSequence([int(base_seed), int(n), int(rep)])
    return int(ss.generate_state(1, np.uint64)[0])


class _Stream:
    """Buffered draws from a counter-based (Philox) generator."""

    def __init__(self, seed_seq: np.random.SeedSequence):
        self._gen = np.random.Generator(np.random.Philox(seed_seq))
        self._exp: list = []
        self._uni: list = []

    def exp(self) -> float:
        if not self._exp:
            self._exp = self._gen.standard_exponential(_BLOCK).tolist()[::-1]
        return self._exp.pop()

    def uniform(self) -> float:
        if not self._uni:
            self._uni = self._gen.random(_BLOCK).tolist()[::-1]
        return self._uni.pop()


class _ArrivalStream(_Stream):
    def __init__(self, seed_seq, rate: float, kind: str):
        super().__init__(seed_seq)
        if kind not in ARRIVAL_KINDS:
            raise ValueError(f"unknown arrival kind {kind!r}; choose one of {ARRIVAL_KINDS}")
        self.rate = rate
        self.kind = kind

    def gap(self) -> float:
        if self.kind == "exponential":
            return self.exp() / self.rate
        if self.kind == "deterministic":
            return 1.0 / self.rate
        return (0.5 + self.uniform()) / self.rate


@dataclass
class SimState:
    t: float
    X: list
    Y: list
    Z: list
    Psi: list
    A: list
    D: list
    T_int: list
    next_arrival: list


@dataclass
class PolicyState:
    phase: str
    k: int
    anchor_drain: list
    anchor_hold: list | None
    eps_n: float
    psi_tilde_n: list
    W_bar: list
    tau_fired: bool = False
    sigma_fired: bool = False
    tau_time: float | None = None
    zeta: list = field(default_factory=list)
    eta: list = field(default_factory=list)


@dataclass
class RunMetrics:
    n: int
    seed: int
    T: float
    busy_time: float
    sup_x_dev: float
    K: int
    tau_n: float | None
    tau_tilde_fired: bool
    sigma_fired: bool
    event_count: int
    sup_w: float
    drain_time: float
    hold_time: float
    error: str | None = None

    @property
    def busy_fraction(self) -> float:
        return self.busy_time / self.T if self.T > 0 else 0.0


@dataclass
class EventRecord:
    index: int
    t: float
    kind: str
    cls: int | None
    pool: int | None
    phase: str
    eY: int
    x_dev: int
    psi: tuple | None = None


class PolicyEngine:
    """Exact-integer state of the n-th system plus the control policy."""

    def __init__(self, sys: ScaledSystem, alloc: StaticAllocation, constants: FluidConstants,
                 witness: SimplePath, eps_scale: float = 1.0, i0: int = 0, j0: int = 0,
                 check: bool = True):
        n = sys.n
        if n < 2:
            raise ScaleError("n must be at least 2 for eps_n to be positive", quantity="n")
        spec = sys.spec
        self.n = n
        self.I, self.J = spec.n_classes, spec.n_pools
        self.i0, self.j0 = i0, j0
        self.check = check
        self.mu = sys.mu_n.tolist()
        self.lam = spec.lam.tolist()
        self.lam_n = sys.lam_n.tolist()
        self.N = [int(v) for v in sys.N_n]
        self.N_e = sum(self.N)
        self.X0 = [int(v) for v in sys.X0_n]
        self.x_star = list(map(float, alloc.x_star))
        self.solver = TreeSolver.from_edges(self.I, self.J, alloc.basic_edges)
        self.pairs = [(i, j) for i in range(self.I) for j in range(self.J) if self.mu[i][j] > 0]

        self.eps = eps_n(n, eps_scale)
        psi_t = build_psi_tilde(alloc, constants, witness)
        psi_n = np.rint(n * psi_t)
        beta = psi_n / n - psi_t
        beta_max = float(np.abs(beta).max())
        if beta_max > self.eps ** 2:
            raise ScaleError(
                f"n = {n} too small: rounding offset {beta_max:.3g} exceeds eps_n^2 = {self.eps ** 2:.3g}",
                quantity="beta", n=n,
            )
        if np.any(psi_n < 0):
            raise ScaleError(f"n = {n} too small: rounded drain allocation negative", quantity="psi_tilde", n=n)
        self.psi_tilde_n = [[int(v) for v in row] for row in psi_n]
        self.theta_n = (sys.N_n / n - spec.nu).tolist()
        self.beta = beta

        # thresholds in customer counts
        self.drain_drop = 7 * self.eps * n
        self.hold_move = 3 * self.eps * n
        self.tau_level = math.sqrt(self.eps) * n

        X = list(self.X0)
        self.state = SimState(
            t=0.0, X=X, Y=[0] * self.I, Z=[0] * self.J, Psi=[[0] * self.J for _ in range(self.I)],
            A=[0] * self.I, D=[[0] * self.J for _ in range(self.I)],
            T_int=[[0.0] * self.J for _ in range(self.I)], next_arrival=[math.inf] * self.I,
        )
        self.policy = PolicyState(
            phase=DRAIN, k=1, anchor_drain=list(X), anchor_hold=None, eps_n=self.eps,
            psi_tilde_n=self.psi_tilde_n, W_bar=[0.0] * self.I,
        )
        self._set_drain()
        self._refresh_w()
        self.busy_time = 0.0
        self.phase_time = {DRAIN: 0.0, HOLD: 0.0, POST: 0.0}
        self.sup_x_dev = 0
        self.sup_w = self._w_norm()
        self.events = 0
        self._verify()
        self._check_tau_sigma()

    # -- service assignment -------------------------------------------------
    def _set_drain(self):
        s = self.state
        s.Psi = [list(row) for row in self.psi_tilde_n]
        s.Y = [s.X[i] - sum(s.Psi[i]) for i in range(self.I)]
        s.Z = [self.N[j] - sum(s.Psi[i][j] for i in range(self.I)) for j in range(self.J)]

    def _set_hold(self):
        s = self.state
        excess = sum(s.X) - self.N_e
        Y = [0] * self.I
        Z = [0] * self.J
        if excess > 0:
            Y[self.i0] = excess
        else:
            Z[self.j0] = -excess
        a = [s.X[i] - Y[i] for i in range(self.I)]
        b = [self.N[j] - Z[j] for j in range(self.J)]
        s.Psi = self.solver.solve_int(a, b)
        s.Y, s.Z = Y, Z

    def _set_post(self):
        s = self.state
        s.Psi = [[0] * self.J for _ in range(self.I)]
        s.Y = list(s.X)
        s.Z = list(self.N)

    # -- bookkeeping --------------------------------------------------------
    def _refresh_w(self):
        """W_bar from the integer counters and the service integrals."""
        s, n = self.state, self.n
        w = self.policy.W_bar
        for i in range(self.I):
            served = 0.0
            for j in range(self.J):
                served += self.mu[i][j] * s.T_int[i][j]
            w[i] = s.X[i] / n - self.x_star[i] - self.lam[i] * s.t + served / n

    def _w_norm(self) -> float:
        return sum(abs(v) for v in self.policy.W_bar)

    def w_drift(self) -> list:
        s, n = self.state, self.n
        return [-self.lam[i] + sum(self.mu[i][j] * s.Psi[i][j] for j in range(self.J)) / n
                for i in range(self.I)]

    def service_rate(self) -> float:
        s = self.state
        return sum(self.mu[i][j] * s.Psi[i][j] for i, j in self.pairs)

    def _verify(self):
        s = self.state
        if any(v < 0 for v in s.Y) or any(v < 0 for v in s.Z) or any(v < 0 for row in s.Psi for v in row):
            raise RegimeError(
                f"negative queue, idle or in-service count at n = {self.n}, t = {s.t:.6g} "
                f"(phase {self.policy.phase})",
                time=s.t, quantity="Y/Z/Psi", n=self.n, X=list(s.X), Y=list(s.Y), Z=list(s.Z),
                Psi=[list(r) for r in s.Psi], phase=self.policy.phase, k=self.policy.k,
            )
        if not self.check:
            return
        for i in range(self.I):
            if s.Y[i] + sum(s.Psi[i]) != s.X[i]:
                raise AssertionError("class balance broken")
            if s.X[i] != self.X0[i] + s.A[i] - sum(s.D[i]):
                raise AssertionError("customer count does not match arrivals minus departures")
            for j in range(self.J):
                if s.Psi[i][j] and self.mu[i][j] == 0:
                    raise AssertionError("service on a non-activity")
        for j in range(self.J):
            if s.Z[j] + sum(s.Psi[i][j] for i in range(self.I)) != self.N[j]:
                raise AssertionError("pool balance broken")

    # -- time evolution -----------------------------------------------------
    def sigma_crossing(self, dt: float):
        """Offset in [0, dt] where ||W_bar|| first reaches eps_n, or None."""
        p = self.policy
        if p.phase == POST or p.sigma_fired:
            return None
        d = self.w_drift()
        w = p.W_bar
        if sum(abs(v) for v in w) + sum(abs(v) for v in d) * dt < self.eps:
            return None
        return first_l1_crossing(w, d, self.eps, dt)

    def advance(self, dt: float):
        if dt <= 0:
            return
        s = self.state
        for i, j in self.pairs:
            if s.Psi[i][j]:
                s.T_int[i][j] += s.Psi[i][j] * dt
        if any(s.Y):
            self.busy_time += dt
        self.phase_time[self.policy.phase] += dt
        s.t += dt
        self._refresh_w()
        self.sup_w = max(self.sup_w, self._w_norm())

    def fire_sigma(self):
        p = self.policy
        p.sigma_fired = True
        self._enter_post()
        self._verify()

    def _enter_post(self):
        p = self.policy
        if p.tau_time is None:
            p.tau_time = self.state.t
        p.phase = POST
        self._set_post()

    def _check_tau_sigma(self) -> bool:
        s, p = self.state, self.policy
        if p.phase == POST:
            return True
        dev = sum(abs(s.X[i] - self.n * self.x_star[i]) for i in range(self.I))
        if dev >= self.tau_level:
            p.tau_fired = True
        if self._w_norm() >= self.eps:
            p.sigma_fired = True
        if p.tau_fired or p.sigma_fired:
            self._enter_post()
            return True
        return False

    def apply(self, kind: str, i: int, j: int | None = None):
        """Apply an arrival (j is None) or a departure of pair (i, j), then the policy."""
        s, p = self.state, self.policy
        self.events += 1
        if kind == "arrival":
            s.X[i] += 1
            s.A[i] += 1
        else:
            if s.Psi[i][j] <= 0:
                raise AssertionError("departure from an empty activity")
            s.X[i] -= 1
            s.D[i][j] += 1
            if p.phase == DRAIN:
                s.Y[i] -= 1
            else:
                s.Psi[i][j] -= 1
                s.Z[j] += 1
        if kind == "arrival" and p.phase != HOLD:
            s.Y[i] += 1
        self._refresh_w()
        self.sup_w = max(self.sup_w, self._w_norm())
        self.sup_x_dev = max(self.sup_x_dev, sum(abs(s.X[q] - self.X0[q]) for q in range(self.I)))

        if not self._check_tau_sigma():
            if p.phase == DRAIN:
                if sum(s.X) - sum(p.anchor_drain) <= -self.drain_drop:
                    p.phase = HOLD
                    p.anchor_hold = list(s.X)
                    p.zeta.append(s.t)
                    self._set_hold()
            else:
                if sum(abs(s.X[q] - p.anchor_hold[q]) for q in range(self.I)) >= self.hold_move:
                    p.phase = DRAIN
                    p.k += 1
                    p.anchor_drain = list(s.X)
                    p.eta.append(s.t)
                    self._set_drain()
                else:
                    self._set_hold()
        self._verify()

    def record(self, kind: str, i=None, j=None, keep_psi: bool = False) -> EventRecord:
        s = self.state
        return EventRecord(
            self.events, s.t, kind, i, j, self.policy.phase, sum(s.Y),
            sum(abs(s.X[q] - self.X0[q]) for q in range(self.I)),
            tuple(tuple(r) for r in s.Psi) if keep_psi else None,
        )

    def metrics(self, seed: int, T: float, error: str | None = None) -> RunMetrics:
        p = self.policy
        return RunMetrics(
            n=self.n, seed=seed, T=T, busy_time=self.busy_time, sup_x_dev=float(self.sup_x_dev),
            K=p.k, tau_n=p.tau_time, tau_tilde_fired=p.tau_fired, sigma_fired=p.sigma_fired,
            event_count=self.events, sup_w=self.sup_w, drain_time=self.phase_time[DRAIN],
            hold_time=self.phase_time[HOLD], error=error,
        )


def init_run(sys: ScaledSystem, alloc, constants, witness, seed: int, arrivals="exponential",
             eps_scale: float = 1.0, check: bool = True):
    """Build the policy engine and the random streams for one run.

    ``arrivals`` is one kind for all classes or a per-class sequence of kinds.
    """
    engine = PolicyEngine(sys, alloc, constants, witness, eps_scale=eps_scale, check=check)
    kinds = [arrivals] * engine.I if isinstance(arrivals, str) else list(arrivals)
    if len(kinds) != engine.I:
        raise ValueError("need one arrival kind per class")
    children = np.random.SeedSequence(int(seed)).spawn(engine.I + 1)
    streams = [_ArrivalStream(children[i], engine.lam_n[i], kinds[i]) for i in range(engine.I)]
    service = _Stream(children[-1])
    for i, st in enumerate(streams):
        engine.state.next_arrival[i] = st.gap()
    return engine, streams, service


def _pick_pair(engine: PolicyEngine, u: float):
    s = engine.state
    target = u * engine.service_rate()
    acc = 0.0
    last = None
    for i, j in engine.pairs:
        r = engine.mu[i][j] * s.Psi[i][j]
        if r > 0:
            acc += r
            last = (i, j)
            if target < acc:
                return i, j
    return last


def step(engine: PolicyEngine, streams, service, T: float):
    """Advance to the next event (or to T). Returns the event kind and indices."""
    s = engine.state
    rate = engine.service_rate()
    t_dep = s.t + service.exp() / rate if rate > 0 else math.inf
    i_arr = min(range(engine.I), key=s.next_arrival.__getitem__)
    t_arr = s.next_arrival[i_arr]
    t_next = min(t_dep, t_arr, T)
    hit = engine.sigma_crossing(t_next - s.t)
    if hit is not None and s.t + hit < t_next:
        engine.advance(hit)
        engine.fire_sigma()
        return "sigma", None, None
    engine.advance(t_next - s.t)
    if t_next >= T and t_next < min(t_dep, t_arr):
        return "end", None, None
    if t_arr <= t_dep:
        s.t = t_arr
        s.next_arrival[i_arr] = t_arr + streams[i_arr].gap()
        engine.apply("arrival", i_arr)
        return "arrival", i_arr, None
    s.t = t_dep
    i, j = _pick_pair(engine, service.uniform())
    engine.apply("departure", i, j)
    return "departure", i, j


def run(sys: ScaledSystem, alloc, constants, witness, T: float, seed: int, arrivals="exponential",
        eps_scale: float = 1.0, log: list | None = None, keep_psi: bool = False,
        check: bool = True, record_errors: bool = False) -> RunMetrics:
    """Simulate on [0, T].

    With ``record_errors`` a regime violation ends the run early and is returned in
    ``RunMetrics.error`` (metrics then cover [0, time of violation]); otherwise it raises.
    """
    engine, streams, service = init_run(sys, alloc, constants, witness, seed, arrivals, eps_scale, check)
    if log is not None:
        log.append(engine.record("init", keep_psi=keep_psi))
    try:
        while engine.state.t < T:
            phase = engine.policy.phase
            kind, i, j = step(engine, streams, service, T)
            if kind == "end":
                break
            if log is not None:
                log.append(engine.record(kind, i, j, keep_psi))
                if engine.policy.phase != phase:
                    log.append(engine.record("phase-change", keep_psi=keep_psi))
    except RegimeError as exc:
        if not record_errors:
            raise
        return engine.metrics(seed, T, error=str(exc))
    return engine.metrics(seed, T)


def replay(sys: ScaledSystem, alloc, constants, witness, log: list, eps_scale: float = 1.0) -> list:
    """Feed the arrival/departure epochs of ``log`` through a fresh policy engine.

    Returns the in-service matrices after each logged event; sigma crossings are
    recomputed from the path, not read from the log.
    """
    engine = PolicyEngine(sys, alloc, constants, witness, eps_scale=eps_scale)
    out = []
    for rec in log:
        if rec.kind in ("init", "phase-change"):
            out.append(tuple(tuple(r) for r in engine.state.Psi))
            continue
        dt = rec.t - engine.state.t
        hit = engine.sigma_crossing(dt)
        if rec.kind == "sigma":
            if hit is None:
                raise AssertionError(f"logged sigma crossing at t = {rec.t} not reproduced")
            engine.advance(hit)
            engine.fire_sigma()
        else:
            if hit is not None and hit < dt:
                raise AssertionError(f"replay finds a sigma crossing before t = {rec.t}")
            engine.advance(dt)
            engine.state.t = rec.t
            engine.apply(rec.kind, rec.cls, rec.pool)
        out.append(tuple(tuple(r) for r in engine.state.Psi))
    return out


def frozen_departure_times(mu, Psi, count: int, seed: int) -> dict:
    """Departure epochs per pair under a fixed assignment, using the simulator's race sampler.

    Sampling stops once every busy pair has at least ``count`` epochs.
    """
    mu = np.asarray(mu, dtype=float)
    Psi = np.asarray(Psi, dtype=int)
    pairs = [(i, j) for i in range(mu.shape[0]) for j in range(mu.shape[1]) if mu[i, j] > 0 and Psi[i, j] > 0]
    rates = [mu[i, j] * Psi[i, j] for i, j in pairs]
    total = sum(rates)
    stream = _Stream(np.random.SeedSequence(int(seed)))
    out = {p: [] for p in pairs}
    t = 0.0
    while min(len(v) for v in out.values()) < count:
        t += stream.exp() / total
        target = stream.uniform() * total
        acc = 0.0
        for p, r in zip(pairs, rates):
            acc += r
            if target < acc:
                out[p].append(t)
                break
        else:
            out[pairs[-1]].append(t)
    return out
