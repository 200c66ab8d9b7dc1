"""Linear time-varying Gaussian system definitions, concatenated dynamics
matrices, and benchmark system generators (integrator chain, spacecraft
relative motion, Dubins vehicle with known turning rates, uncontrolled
stable system)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import block_diag, expm

from .geometry import HPolytope, box_polytope

_PSD_TOL = 1e-10


@dataclass
class GaussianDisturbance:
    """Per-step mean vectors and PSD covariance matrices."""

    mean_per_step: List[np.ndarray]
    cov_per_step: List[np.ndarray]

    def __post_init__(self):
        self.mean_per_step = [np.asarray(m, dtype=float).ravel()
                              for m in self.mean_per_step]
        self.cov_per_step = [np.atleast_2d(np.asarray(c, dtype=float))
                             for c in self.cov_per_step]
        if len(self.mean_per_step) != len(self.cov_per_step):
            raise ValueError("mean/cov step count mismatch")
        for mu, cov in zip(self.mean_per_step, self.cov_per_step):
            if cov.shape != (mu.size, mu.size):
                raise ValueError("covariance shape mismatch")
            if np.max(np.abs(cov - cov.T)) > _PSD_TOL * max(1.0, np.abs(cov).max()):
                raise ValueError("covariance must be symmetric")
            if np.min(np.linalg.eigvalsh(0.5 * (cov + cov.T))) < -_PSD_TOL:
                raise ValueError("covariance must be positive semidefinite")

    @classmethod
    def iid(cls, mean, cov, steps: int) -> "GaussianDisturbance":
        return cls(mean_per_step=[np.asarray(mean, dtype=float)] * steps,
                   cov_per_step=[np.asarray(cov, dtype=float)] * steps)


@dataclass
class StochasticLTVSystem:
    """x_{k+1} = A_k x_k + B_k u_k + w_k with Gaussian w_k and polytopic
    input set; input_dim may be zero for uncontrolled systems."""

    A_seq: List[np.ndarray]
    B_seq: List[np.ndarray]
    disturbance: GaussianDisturbance
    input_set: Optional[HPolytope]
    horizon: int

    def __post_init__(self):
        self.A_seq = [np.atleast_2d(np.asarray(a, dtype=float)) for a in self.A_seq]
        self.B_seq = [np.atleast_2d(np.asarray(b, dtype=float)) for b in self.B_seq]
        n = self.A_seq[0].shape[0]
        self.B_seq = [b.reshape(n, -1) for b in self.B_seq]
        if not (len(self.A_seq) == len(self.B_seq) == self.horizon
                == len(self.disturbance.mean_per_step)):
            raise ValueError("sequence lengths must equal the horizon")
        for a, b in zip(self.A_seq, self.B_seq):
            if a.shape != (n, n) or b.shape[0] != n:
                raise ValueError("matrix dimensions inconsistent")
        m = self.B_seq[0].shape[1]
        if any(b.shape[1] != m for b in self.B_seq):
            raise ValueError("input dimension varies across steps")
        if m > 0:
            if self.input_set is None:
                raise ValueError("input set required when input_dim > 0")
            if self.input_set.dim != m:
                raise ValueError("input set dimension mismatch")
            if self.input_set.is_empty() or not self.input_set.is_bounded():
                raise ValueError("input set must be nonempty and bounded")

    @property
    def state_dim(self) -> int:
        return self.A_seq[0].shape[0]

    @property
    def input_dim(self) -> int:
        return self.B_seq[0].shape[1]

    @classmethod
    def lti(cls, a, b, disturbance_mean, disturbance_cov,
            input_set: Optional[HPolytope], horizon: int) -> "StochasticLTVSystem":
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.asarray(b, dtype=float).reshape(a.shape[0], -1)
        dist = GaussianDisturbance.iid(disturbance_mean, disturbance_cov, horizon)
        return cls(A_seq=[a] * horizon, B_seq=[b] * horizon,
                   disturbance=dist, input_set=input_set, horizon=horizon)

    def step(self, k: int, x: np.ndarray, u: Optional[np.ndarray],
             w: np.ndarray) -> np.ndarray:
        out = self.A_seq[k] @ x + w
        if self.input_dim:
            out = out + self.B_seq[k] @ u
        return out


@dataclass
class TargetTube:
    """Time-indexed safe sets T_0..T_N; each must be bounded."""

    sets: List[HPolytope]

    def __post_init__(self):
        if len(self.sets) < 2:
            raise ValueError("tube needs at least T_0 and T_1")
        dim = self.sets[0].dim
        for poly in self.sets:
            if poly.dim != dim:
                raise ValueError("all tube sets must share the state dimension")
            if not poly.is_bounded():
                raise ValueError("tube sets must be bounded")

    @property
    def horizon(self) -> int:
        return len(self.sets) - 1

    @property
    def dim(self) -> int:
        return self.sets[0].dim

    def __getitem__(self, k: int) -> HPolytope:
        return self.sets[k]

    def contains_trajectory(self, states: np.ndarray, tol: float = 1e-9) -> bool:
        """states has rows x_0..x_N."""
        return all(poly.contains(states[k], tol) for k, poly in enumerate(self.sets))


@dataclass
class ConcatenatedDynamics:
    """X = Acal x0 + H U + G W for X = [x_1; ...; x_N]."""

    Acal: np.ndarray
    H: np.ndarray
    G: np.ndarray
    muW: np.ndarray
    CW: np.ndarray
    state_dim: int
    input_dim: int
    horizon: int

    def block(self, mat: np.ndarray, k: int) -> np.ndarray:
        """Rows of mat for state x_k (k in 1..N)."""
        n = self.state_dim
        return mat[(k - 1) * n:k * n]

    def step_marginal(self, mean: np.ndarray, cov: np.ndarray,
                      k: int) -> Tuple[np.ndarray, np.ndarray]:
        """Marginal (mu_k, C_k) of state x_k from concatenated moments."""
        n = self.state_dim
        sl = slice((k - 1) * n, k * n)
        return mean[sl], cov[sl, sl]


def concat_matrices(sys: StochasticLTVSystem) -> ConcatenatedDynamics:
    """Stack the dynamics over the horizon into block matrices."""
    n, m, nsteps = sys.state_dim, sys.input_dim, sys.horizon
    acal = np.zeros((n * nsteps, n))
    hmat = np.zeros((n * nsteps, m * nsteps))
    gmat = np.zeros((n * nsteps, n * nsteps))
    # prod[k] = A_{k-1} ... A_0 maps x0 to the mean path; build row blocks
    # cumulatively: block for x_{k+1} = A_k @ block for x_k
    cur = np.eye(n)
    for k in range(nsteps):
        cur = sys.A_seq[k] @ cur
        acal[k * n:(k + 1) * n] = cur
    for k in range(nsteps):      # state x_{k+1} occupies block row k
        for j in range(k + 1):   # contribution of u_j / w_j
            prod = np.eye(n)
            for i in range(j + 1, k + 1):
                prod = sys.A_seq[i] @ prod
            if m:
                hmat[k * n:(k + 1) * n, j * m:(j + 1) * m] = prod @ sys.B_seq[j]
            gmat[k * n:(k + 1) * n, j * n:(j + 1) * n] = prod
    muw = np.concatenate(sys.disturbance.mean_per_step)
    cw = block_diag(*sys.disturbance.cov_per_step)
    return ConcatenatedDynamics(Acal=acal, H=hmat, G=gmat, muW=muw,
                                CW=np.atleast_2d(cw), state_dim=n,
                                input_dim=m, horizon=nsteps)


def state_mean_cov(cd: ConcatenatedDynamics, x0, u_seq=None):
    """Mean and covariance of the concatenated state X."""
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != cd.state_dim:
        raise ValueError("x0 dimension mismatch")
    u_vec = np.zeros(cd.input_dim * cd.horizon) if u_seq is None else \
        np.asarray(u_seq, dtype=float).ravel()
    if u_vec.size != cd.input_dim * cd.horizon:
        raise ValueError("input vector length mismatch")
    mean = cd.Acal @ x0 + cd.H @ u_vec + cd.G @ cd.muW
    cov = cd.G @ cd.CW @ cd.G.T
    return mean, cov


def make_integrator_chain(n: int, sampling_time: float, horizon: int,
                          cov: float, input_bound: float) -> StochasticLTVSystem:
    """Chain of n integrators under zero-order hold."""
    if n < 1 or sampling_time <= 0.0:
        raise ValueError("need n >= 1 and positive sampling time")
    ts = sampling_time
    a = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            a[i, j] = ts ** (j - i) / math.factorial(j - i)
    b = np.array([ts ** (n - i) / math.factorial(n - i) for i in range(n)])
    input_set = box_polytope([0.0], [input_bound])
    return StochasticLTVSystem.lti(a, b, np.zeros(n), cov * np.eye(n),
                                   input_set, horizon)


def make_cwh(orbital_rate: float = 0.00106, mass: float = 1.0,
             sampling_time: float = 20.0, horizon: int = 5,
             cov_diag: Sequence[float] = (1e-4, 1e-4, 5e-8, 5e-8),
             input_bound: float = 0.1) -> StochasticLTVSystem:
    """Planar relative orbital motion (state [x, y, xdot, ydot]) with exact
    zero-order-hold discretization via the augmented matrix exponential."""
    if orbital_rate <= 0.0 or mass <= 0.0 or sampling_time <= 0.0:
        raise ValueError("orbital rate, mass, and sampling time must be positive")
    w = orbital_rate
    a_c = np.array([[0.0, 0.0, 1.0, 0.0],
                    [0.0, 0.0, 0.0, 1.0],
                    [3.0 * w * w, 0.0, 0.0, 2.0 * w],
                    [0.0, 0.0, -2.0 * w, 0.0]])
    b_c = np.array([[0.0, 0.0], [0.0, 0.0],
                    [1.0 / mass, 0.0], [0.0, 1.0 / mass]])
    aug = np.zeros((6, 6))
    aug[:4, :4] = a_c
    aug[:4, 4:] = b_c
    phi = expm(aug * sampling_time)
    a_d, b_d = phi[:4, :4], phi[:4, 4:]
    input_set = box_polytope([0.0, 0.0], [input_bound, input_bound])
    return StochasticLTVSystem.lti(a_d, b_d, np.zeros(4),
                                   np.diag(np.asarray(cov_diag, dtype=float)),
                                   input_set, horizon)


def cwh_los_tube(horizon: int = 5) -> TargetTube:
    """Line-of-sight cone tube with a docking terminal box."""
    # cone |x| <= -y, bounded by |x| <= 2, y >= -2, velocity caps 0.5
    cone = HPolytope(
        normals=np.array([
            [1.0, 1.0, 0.0, 0.0], [-1.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0],
            [0.0, -1.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, -1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 0.0, -1.0]]),
        offsets=np.array([0.0, 0.0, 2.0, 2.0, 2.0, 0.0,
                          0.5, 0.5, 0.5, 0.5]))
    terminal = HPolytope(
        normals=np.vstack([np.eye(4), -np.eye(4)]),
        offsets=np.array([0.1, 0.0, 0.01, 0.01, 0.1, 0.1, 0.01, 0.01]))
    return TargetTube(sets=[cone] * horizon + [terminal])


def dubins_headings(phi0: float, sampling_time: float,
                    turn_rates: Sequence[float], horizon: int) -> np.ndarray:
    rates = np.asarray(turn_rates, dtype=float)
    if rates.size < horizon:
        raise ValueError("turn_rates must cover the horizon")
    cums = np.concatenate([[0.0], np.cumsum(rates[:horizon - 1])])
    return phi0 + sampling_time * cums


def make_dubins(sampling_time: float, horizon: int, phi0: float,
                turn_rates: Sequence[float], umax: float,
                mu_eta=(0.0, 0.0), cov_eta=None) -> StochasticLTVSystem:
    """Position-only Dubins dynamics with a known heading schedule."""
    if umax <= 0.0:
        raise ValueError("umax must be positive")
    headings = dubins_headings(phi0, sampling_time, turn_rates, horizon)
    a_seq = [np.eye(2)] * horizon
    b_seq = [sampling_time * np.array([[math.cos(p)], [math.sin(p)]])
             for p in headings]
    cov = 1e-3 * np.eye(2) if cov_eta is None else np.asarray(cov_eta, dtype=float)
    dist = GaussianDisturbance.iid(np.asarray(mu_eta, dtype=float), cov, horizon)
    input_set = HPolytope(normals=np.array([[1.0], [-1.0]]),
                          offsets=np.array([umax, 0.0]))  # u in [0, umax]
    return StochasticLTVSystem(A_seq=a_seq, B_seq=b_seq, disturbance=dist,
                               input_set=input_set, horizon=horizon)


def nominal_dubins_tube(sys: StochasticLTVSystem, delta: float,
                        decay_steps: float = 100.0,
                        base_half_width: float = 4.0) -> TargetTube:
    """Boxes around the noiseless constant-throttle trajectory, with
    exponentially decaying half-widths."""
    if not (0.0 < delta <= 1.0):
        raise ValueError("delta must lie in (0, 1]")
    lo, hi = sys.input_set.interval_bounds()
    u = delta * hi[0]
    centers = [np.zeros(2)]
    for k in range(sys.horizon):
        centers.append(centers[-1] + (sys.B_seq[k] @ np.array([u])))
    sets = [box_polytope(c, [base_half_width * math.exp(-k / decay_steps)] * 2)
            for k, c in enumerate(centers)]
    return TargetTube(sets=sets)


def make_uncontrolled(n: int, gain: float = 0.8, cov: float = 0.05,
                      horizon: int = 10) -> StochasticLTVSystem:
    """x+ = gain * x + w with no input channel."""
    a = gain * np.eye(n)
    b = np.zeros((n, 0))
    dist = GaussianDisturbance.iid(np.zeros(n), cov * np.eye(n), horizon)
    return StochasticLTVSystem(A_seq=[a] * horizon, B_seq=[b] * horizon,
                               disturbance=dist, input_set=None, horizon=horizon)


def viability_tube(dim: int, half_width: float, horizon: int,
                   terminal_half_width: Optional[float] = None) -> TargetTube:
    """Constant box tube, optionally with a tighter terminal box."""
    box = box_polytope(np.zeros(dim), [half_width] * dim)
    term = box if terminal_half_width is None else \
        box_polytope(np.zeros(dim), [terminal_half_width] * dim)
    return TargetTube(sets=[box] * horizon + [term])
