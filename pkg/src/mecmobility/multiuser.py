"""Load-aware multiuser association: system cost and worst-association improvement."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .controller import z_frame_closed_form
from .offloading import OffloadModel


@dataclass(frozen=True)
class MultiuserSettings:
    base_rate: float = 2e10
    degradation: float = 0.926
    speeds: tuple[float, ...] = (2.0, 4.0, 6.0, 8.0, 10.0)

    def __post_init__(self):
        if self.base_rate <= 0:
            raise ValueError("base_rate must be positive")
        if not 0 < self.degradation <= 1:
            raise ValueError("degradation must lie in (0, 1]")
        if not self.speeds or min(self.speeds) <= 0:
            raise ValueError("speeds must be positive")


class AssociationMatrix:
    """Binary user-to-BS association, stored as one BS index per user."""

    def __init__(self, assignment, num_bs: int):
        a = np.array(assignment, dtype=np.int64).reshape(-1)
        if a.size == 0:
            raise ValueError("need at least one user")
        if a.min() < 0 or a.max() >= num_bs:
            raise ValueError("assignment refers to a BS outside [0, num_bs)")
        self.assignment = a
        self.num_bs = int(num_bs)

    @classmethod
    def from_matrix(cls, x) -> "AssociationMatrix":
        x = np.asarray(x)
        if x.ndim != 2 or not np.isin(x, (0, 1)).all():
            raise ValueError("association matrix must be a 0/1 matrix")
        if not (x.sum(axis=1) == 1).all():
            raise ValueError("every user must be associated with exactly one BS")
        return cls(x.argmax(axis=1), x.shape[1])

    @property
    def num_users(self) -> int:
        return self.assignment.size

    @property
    def matrix(self) -> np.ndarray:
        x = np.zeros((self.num_users, self.num_bs), dtype=np.int8)
        x[np.arange(self.num_users), self.assignment] = 1
        return x

    @property
    def loads(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.num_bs)

    def moved(self, user: int, bs: int) -> "AssociationMatrix":
        a = self.assignment.copy()
        a[user] = bs
        return AssociationMatrix(a, self.num_bs)

    def __eq__(self, other) -> bool:
        return (isinstance(other, AssociationMatrix) and self.num_bs == other.num_bs
                and np.array_equal(self.assignment, other.assignment))

    def __repr__(self) -> str:
        return f"AssociationMatrix({self.assignment.tolist()}, num_bs={self.num_bs})"


def load_rate(base_rate, degradation, load):
    """CPU rate seen by each of ``load`` users sharing a BS."""
    load = np.asarray(load)
    if np.any(load < 1):
        raise ValueError("an occupied BS must carry at least one user")
    out = np.asarray(base_rate, dtype=float) * np.asarray(degradation, dtype=float) ** (load - 1)
    return float(out) if out.ndim == 0 else out


@dataclass
class MultiuserScenario:
    """Everything the per-frame association problem needs for one frame."""

    model: OffloadModel
    H: np.ndarray  # (M, N) large-scale gains
    Q: np.ndarray  # (M,) queue lengths at the frame start
    prev: np.ndarray  # (M,) association in the previous frame
    V: float
    rho: float
    T: int
    C: int
    base_rate: np.ndarray | float = 2e10  # scalar or (M, N)
    degradation: np.ndarray | float = 0.926  # scalar or (N,)

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        M, N = self.H.shape
        self.Q = np.broadcast_to(np.asarray(self.Q, dtype=float), (M,))
        self.prev = np.asarray(self.prev, dtype=np.int64).reshape(M)
        self.base_rate = np.broadcast_to(np.asarray(self.base_rate, dtype=float), (M, N))
        self.degradation = np.broadcast_to(np.asarray(self.degradation, dtype=float), (N,))
        if np.any((self.degradation <= 0) | (self.degradation > 1)):
            raise ValueError("degradation factors must lie in (0, 1]")

    @property
    def num_users(self) -> int:
        return self.H.shape[0]

    @property
    def num_bs(self) -> int:
        return self.H.shape[1]

    def zsum(self, users, bss, loads):
        """Z_sum of user ``users[j]`` at BS ``bss[j]`` carrying ``loads[j]`` users."""
        users = np.asarray(users, dtype=np.int64)
        bss = np.asarray(bss, dtype=np.int64)
        f = load_rate(self.base_rate[users, bss], self.degradation[bss], loads)
        Q = self.Q[users]
        Z = np.asarray(z_frame_closed_form(self.model, self.H[users, bss], f, Q, self.V), dtype=float)
        same = bss == self.prev[users]
        return np.where(same, self.rho * self.T * Z,
                        self.rho * (self.T - self.C) * Z + self.rho * self.C * Q)

    def user_costs(self, X: AssociationMatrix) -> np.ndarray:
        users = np.arange(self.num_users)
        return self.zsum(users, X.assignment, X.loads[X.assignment])


def _check(X: AssociationMatrix, scen: MultiuserScenario) -> None:
    if X.num_users != scen.num_users or X.num_bs != scen.num_bs:
        raise ValueError("association matrix does not match the scenario")


def system_cost(X: AssociationMatrix, scen: MultiuserScenario) -> float:
    """R(X): sum of every user's Z_sum at its BS under the loads X implies."""
    _check(X, scen)
    return float(scen.user_costs(X).sum())


def worst_pair(X: AssociationMatrix, scen: MultiuserScenario) -> tuple[int, int]:
    """Occupied (user, BS) entry with the largest Z_sum; lowest user index on ties."""
    _check(X, scen)
    i = int(np.argmax(scen.user_costs(X)))
    return i, int(X.assignment[i])


def _tolerance(reference: float) -> float:
    return 1e-12 * max(1.0, abs(reference))


def association_update(X: AssociationMatrix, pair: tuple[int, int],
                       scen: MultiuserScenario) -> AssociationMatrix:
    """Best of X and the N-1 matrices that move ``pair``'s user to another BS.

    The incumbent is kept unless a switch lowers R by more than rounding noise.
    """
    i, n = pair
    if X.assignment[i] != n:
        raise ValueError("pair must be an occupied entry of X")
    base = system_cost(X, scen)
    best, best_cost = X, base
    for m in range(scen.num_bs):
        if m == n:
            continue
        cand = X.moved(i, m)
        c = system_cost(cand, scen)
        if c < best_cost and c < base - _tolerance(base):
            best, best_cost = cand, c
    return best


def exhaustive_optimum(scen: MultiuserScenario) -> tuple[AssociationMatrix, float]:
    """Brute-force minimiser of R over all N^M associations (small instances only)."""
    M, N = scen.num_users, scen.num_bs
    best, best_cost = None, np.inf
    for combo in itertools.product(range(N), repeat=M):
        X = AssociationMatrix(combo, N)
        c = system_cost(X, scen)
        if c < best_cost:
            best, best_cost = X, c
    return best, best_cost


class _DirectCosts:
    """Recomputes R from scratch for every candidate; the reference evaluator."""

    def __init__(self, X: AssociationMatrix, scen: MultiuserScenario):
        self.scen = scen
        self.X = X

    def total(self) -> float:
        return system_cost(self.X, self.scen)

    def worst_user(self) -> int:
        return worst_pair(self.X, self.scen)[0]

    def best_move(self, i: int) -> int | None:
        n = int(self.X.assignment[i])
        nxt = association_update(self.X, (i, n), self.scen)
        return None if nxt == self.X else int(nxt.assignment[i])

    def apply(self, i: int, m: int) -> None:
        self.X = self.X.moved(i, m)


class _IncrementalCosts:
    """Same answers as ``_DirectCosts`` with O(N) work per candidate user.

    Keeps, per user j, its cost now (``cur``), after one user leaves its BS
    (``minus``), and for every BS m the cost of j at m with one more user
    (``plus[j, m]``).  Moving i from n to m then changes R by
        (A_n - (minus_i - cur_i)) + B_m + plus[i, m] - cur_i,
    with A_n, B_m the per-BS sums of (minus - cur) and (plus - cur).
    """

    def __init__(self, X: AssociationMatrix, scen: MultiuserScenario):
        self.scen = scen
        self.assign = X.assignment.copy()
        self.loads = X.loads.copy()
        M, N = scen.num_users, scen.num_bs
        users = np.repeat(np.arange(M), N)
        bss = np.tile(np.arange(N), M)
        self.plus = scen.zsum(users, bss, self.loads[bss] + 1).reshape(M, N)
        self.cur = np.empty(M)
        self.minus = np.empty(M)
        self.A = np.zeros(N)
        self.B = np.zeros(N)
        for n in range(N):
            self._refresh_bs(n, plus=False)

    @property
    def X(self) -> AssociationMatrix:
        return AssociationMatrix(self.assign, self.scen.num_bs)

    def _refresh_bs(self, n: int, plus: bool = True) -> None:
        scen = self.scen
        members = np.flatnonzero(self.assign == n)
        y = int(self.loads[n])
        if plus:
            self.plus[:, n] = scen.zsum(np.arange(scen.num_users), np.full(scen.num_users, n),
                                        np.full(scen.num_users, y + 1))
        if members.size == 0:
            self.A[n] = self.B[n] = 0.0
            return
        bs = np.full(members.size, n)
        self.cur[members] = scen.zsum(members, bs, np.full(members.size, y))
        if y > 1:
            self.minus[members] = scen.zsum(members, bs, np.full(members.size, y - 1))
        else:
            self.minus[members] = self.cur[members]
        self.A[n] = np.sum(self.minus[members] - self.cur[members])
        self.B[n] = np.sum(self.plus[members, n] - self.cur[members])

    def total(self) -> float:
        return float(self.cur.sum())

    def worst_user(self) -> int:
        return int(np.argmax(self.cur))

    def best_move(self, i: int) -> int | None:
        n = int(self.assign[i])
        own = self.minus[i] - self.cur[i]
        delta = (self.A[n] - own) + self.B + self.plus[i] - self.cur[i]
        delta[n] = np.inf
        m = int(np.argmin(delta))
        if delta[m] < -_tolerance(self.total()):
            return m
        return None

    def apply(self, i: int, m: int) -> None:
        n = int(self.assign[i])
        self.assign[i] = m
        self.loads[n] -= 1
        self.loads[m] += 1
        self._refresh_bs(n)
        self._refresh_bs(m)


@dataclass
class Algorithm2Result:
    X: AssociationMatrix
    iterations: int
    initial_cost: float
    final_cost: float
    costs: list[float] = field(default_factory=list)  # R after every iteration
    history: list[np.ndarray] = field(default_factory=list)  # assignments, when traced

    @property
    def migrations(self) -> int:
        return 0 if not self.history else int(np.sum(self.history[0] != self.X.assignment))


def algorithm2(X0: AssociationMatrix, scen: MultiuserScenario, *, incremental: bool = True,
               trace: bool = False, max_iter: int | None = None) -> Algorithm2Result:
    """Worst-association improvement with round-robin user switching.

    Each iteration re-optimises one user's BS with everybody else fixed.  The
    user is the current worst (i, n) pair, except right after an iteration that
    changed nothing, when users are taken in round-robin order instead.  Stops
    once X has not changed for M consecutive iterations and every user has been
    examined since the last change (the worst user can repeat inside the
    round-robin window, so M iterations alone may skip one user).
    """
    _check(X0, scen)
    M = scen.num_users
    ev = (_IncrementalCosts if incremental else _DirectCosts)(X0, scen)
    max_iter = max_iter if max_iter is not None else 100 * M * scen.num_bs + 10
    r0 = ev.total()
    costs: list[float] = []
    history = [X0.assignment.copy()] if trace else []
    i = ev.worst_user()
    s = 1
    unchanged = 0
    seen: set[int] = set()
    it = 0
    while unchanged < M or len(seen) < M:
        if it >= max_iter:
            raise RuntimeError("algorithm2 exceeded its iteration budget")
        it += 1
        m = ev.best_move(i)
        if m is None:
            unchanged += 1
            seen.add(i)
            i = (s - 1) % M
            s += 1
        else:
            ev.apply(i, m)
            unchanged = 0
            seen.clear()
            i = ev.worst_user()
        if trace:
            costs.append(ev.total())
            history.append(ev.X.assignment.copy())
    X = ev.X
    if not trace:
        history = [X0.assignment.copy()]
    return Algorithm2Result(X, it, r0, ev.total(), costs, history)
