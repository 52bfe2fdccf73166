"""Condensed linear tracking MPC.

The optimal control problem over the horizon N,

    min  ||xi_N - x_bar_v||_P^2 + sum_{i<N} ||xi_i - x_bar_v||_Q^2
                                          + ||mu_i - u_bar_v||_R^2
    s.t. xi_0 = x,  xi_{i+1} = A xi_i + B mu_i,
         C xi_i + D mu_i in Y  (i = 0..N-1),
         (xi_N, v) in T,

is condensed by eliminating the state sequence through the stacked
prediction map, leaving a strictly convex QP in the stacked input mu with
constraint rows M mu + L theta <= b over the parameter theta = (x, v).
The same data yields the feedback law (first input block of the
minimizer), the explicit feasible set (projection of the condensed
polytope onto theta), per-instance feasibility LPs, and the minimal
feasible horizon search.
"""

import numpy as np

from fgmpc.plant import equilibrium_basis
from fgmpc.polytope import HPolyhedron
from fgmpc.solver import TOL, QpProblem, Status, min_violation, solve_qp


class OcpInfeasibleError(RuntimeError):
    """The optimal control problem has no solution at the queried (x, v)."""


def _symmetric_weight(M, name, dim, semidefinite):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape != (dim, dim):
        raise ValueError("{} must be {}x{}, got {}x{}".format(
            name, dim, dim, M.shape[0], M.shape[1]))
    if np.max(np.abs(M - M.T), initial=0.0) > 1e-10:
        raise ValueError("{} must be symmetric".format(name))
    if semidefinite:
        if np.linalg.eigvalsh(M)[0] < -1e-10:
            raise ValueError("{} must be positive semidefinite".format(name))
    else:
        try:
            np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            raise ValueError("{} must be positive definite".format(name))
    return M


class OcpDesign:
    """Horizon, weights, terminal ingredients, and the output constraint set.

    Q and P weight the state error, R the input error, K is the terminal
    LQR gain, T the terminal set over (x, v), and Y the output constraint
    polytope imposed along the horizon.
    """

    def __init__(self, N, Q, R, P, K, T, Y):
        self.N = int(N)
        if self.N < 1:
            raise ValueError("horizon N must be at least 1")
        n_x = T.n_x
        self.Q = _symmetric_weight(Q, "Q", n_x, semidefinite=True)
        self.P = _symmetric_weight(P, "P", n_x, semidefinite=True)
        self.K = np.atleast_2d(np.asarray(K, dtype=float))
        if self.K.shape[1] != n_x:
            raise ValueError("K must have {} columns".format(n_x))
        n_u = self.K.shape[0]
        self.R = _symmetric_weight(R, "R", n_u, semidefinite=False)
        self.T = T
        self.Y = Y
        for M in (self.Q, self.R, self.P, self.K):
            M.setflags(write=False)


class CondensedQp:
    """Condensed OCP data: objective (H, W) and constraints (M, L, b).

    For theta = (x, v) the instance solved online is

        min 0.5 mu' H mu + (W theta)' mu   s.t.  M mu <= b - L theta,

    with H positive definite. Immutable; concurrent solves on the same
    object are safe because each solve owns its workspace.
    """

    def __init__(self, H, W, M, L, b, n_x, n_u, n_v, design):
        self.H = H
        self.W = W
        self.M = M
        self.L = L
        self.b = b
        self.n_x = n_x
        self.n_u = n_u
        self.n_v = n_v
        self.design = design
        for arr in (self.H, self.W, self.M, self.L, self.b):
            arr.setflags(write=False)

    @property
    def N(self):
        return self.design.N


class FeasibleSet:
    """Explicit feasible set of the horizon-N problem over (x, v)."""

    def __init__(self, set_xv, N):
        self.set_xv = set_xv
        self.N = N

    @classmethod
    def from_terminal(cls, T):
        """Horizon-0 convention: with no moves left, feasibility is exactly
        terminal-set membership."""
        return cls(T.set_xv, 0)


def _prediction_maps(plant, N):
    """Powers A^i (i = 0..N) and impulse blocks A^k B (k = 0..N-1)."""
    n_x = plant.n_x
    Apow = np.empty((N + 1, n_x, n_x))
    Apow[0] = np.eye(n_x)
    for i in range(N):
        Apow[i + 1] = plant.A @ Apow[i]
    G = np.empty((N, n_x, plant.n_u))
    for k in range(N):
        G[k] = Apow[k] @ plant.B
    return Apow, G


def condense(plant, design, em=None):
    """Build the condensed QP for the given plant and design.

    The mu-independent additive part of the objective is dropped: it does
    not move the minimizer. Constraint rows are ordered output block
    i = 0..N-1 first, terminal block last, so the data is bit-reproducible.
    """
    if em is None:
        em = equilibrium_basis(plant)
    N = design.N
    n_x, n_u, n_v = plant.n_x, plant.n_u, em.n_v
    T, Y = design.T, design.Y
    if T.n_x != n_x:
        raise ValueError("terminal set is over a {}-dimensional state, the "
                         "plant has {}".format(T.n_x, n_x))
    if T.T_v.shape[1] != n_v:
        raise ValueError("terminal set reference dimension mismatch")
    if Y.dim != plant.n_y:
        raise ValueError("Y has dimension {} but the plant has {} "
                         "constrained outputs".format(Y.dim, plant.n_y))

    Apow, G = _prediction_maps(plant, N)

    # stacked prediction of (xi_1 .. xi_N): Sx x + Su mu
    Sx = Apow[1:].reshape(N * n_x, n_x)
    Su = np.zeros((N * n_x, N * n_u))
    for i in range(1, N + 1):
        for j in range(i):
            Su[(i - 1) * n_x:i * n_x, j * n_u:(j + 1) * n_u] = G[i - 1 - j]

    Qbar = np.zeros((N * n_x, N * n_x))
    for i in range(N - 1):
        Qbar[i * n_x:(i + 1) * n_x, i * n_x:(i + 1) * n_x] = design.Q
    Qbar[(N - 1) * n_x:, (N - 1) * n_x:] = design.P
    Rbar = np.kron(np.eye(N), design.R)

    H = 2.0 * (Su.T @ Qbar @ Su + Rbar)
    H = 0.5 * (H + H.T)
    Gx_stack = np.tile(em.G_x, (N, 1))
    Gu_stack = np.tile(em.G_u, (N, 1))
    W = np.hstack([
        2.0 * Su.T @ Qbar @ Sx,
        -2.0 * (Su.T @ Qbar @ Gx_stack + Rbar @ Gu_stack),
    ])

    n_r = Y.nrows
    YaC = Y.A @ plant.C
    YaD = Y.A @ plant.D
    M = np.zeros((N * n_r + T.nrows, N * n_u))
    L = np.zeros((N * n_r + T.nrows, n_x + n_v))
    b = np.empty(N * n_r + T.nrows)
    for i in range(N):
        rows = slice(i * n_r, (i + 1) * n_r)
        for j in range(i):
            M[rows, j * n_u:(j + 1) * n_u] = YaC @ G[i - 1 - j]
        M[rows, i * n_u:(i + 1) * n_u] = YaD
        L[rows, :n_x] = YaC @ Apow[i]
        b[rows] = Y.b
    tr = slice(N * n_r, None)
    for j in range(N):
        M[tr, j * n_u:(j + 1) * n_u] = T.T_x @ G[N - 1 - j]
    L[tr, :n_x] = T.T_x @ Apow[N]
    L[tr, n_x:] = T.T_v
    b[tr] = T.c

    return CondensedQp(H, W, M, L, b, n_x, n_u, n_v, design)


def mpc_feedback(qp, x, v, warm_start=None):
    """Solve the condensed QP at (x, v) and return (u, solve record).

    u is the first input block of the unique minimizer. warm_start is an
    optional sequence of constraint indices tried first by the QP solver
    (typically the previous step's active set).
    """
    x = np.asarray(x, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if x.size != qp.n_x or v.size != qp.n_v:
        raise ValueError("expected state of size {} and reference of size "
                         "{}".format(qp.n_x, qp.n_v))
    theta = np.concatenate([x, v])
    problem = QpProblem(qp.H, qp.W @ theta, qp.M, qp.b - qp.L @ theta)
    st = solve_qp(problem, warm_start=warm_start)
    if st.status == Status.INFEASIBLE:
        raise OcpInfeasibleError(
            "OCP infeasible at (x, v) = ({}, {})".format(x.tolist(),
                                                         v.tolist()))
    if st.status != Status.OPTIMAL:
        raise RuntimeError("QP solve failed with status {}".format(
            st.status.name))
    return st.x[:qp.n_u].copy(), st


def feasible_set(qp, row_cap=None):
    """Project the condensed polytope {(mu, theta) : M mu + L theta <= b}
    onto theta, returning the explicit feasible set in minimal H-rep."""
    N, n_u = qp.N, qp.n_u
    stacked = HPolyhedron(np.hstack([qp.M, qp.L]), qp.b)
    keep = list(range(N * n_u, N * n_u + qp.n_x + qp.n_v))
    if row_cap is None:
        projected = stacked.project(keep)
    else:
        projected = stacked.project(keep, row_cap=row_cap)
    return FeasibleSet(projected.remove_redundancy(), N)


class _HorizonOracle:
    """Per-horizon feasibility LPs sharing precomputed prediction maps.

    For a horizon h the constraint rows in mu are the leading sub-blocks of
    the horizon-cap output rows plus a fresh terminal block, so the scan in
    n_star only assembles small pieces per query.
    """

    def __init__(self, plant, design, cap):
        self.plant = plant
        self.design = design
        self.cap = cap
        self.Apow, self.G = _prediction_maps(plant, max(cap, 1))
        Y, T = design.Y, design.T
        self.YaC = Y.A @ plant.C
        self.YaD = Y.A @ plant.D
        self.Yb = Y.b
        # E[k] multiplies mu_j in the output row block i = j + k + 1
        self.E = np.array([self.YaC @ self.G[k] for k in range(cap)])
        self.TG = np.array([design.T.T_x @ self.G[k] for k in range(cap)])

    def rows(self, h):
        n_r, n_u = self.Yb.size, self.plant.n_u
        n_t = self.design.T.nrows
        M = np.zeros((h * n_r + n_t, h * n_u))
        for i in range(h):
            rows = slice(i * n_r, (i + 1) * n_r)
            M[rows, i * n_u:(i + 1) * n_u] = self.YaD
            for j in range(i):
                M[rows, j * n_u:(j + 1) * n_u] = self.E[i - 1 - j]
        M[h * n_r:] = np.hstack([self.TG[h - 1 - j] for j in range(h)])
        return M

    def rhs(self, h, x, v):
        T = self.design.T
        out = np.empty(h * self.Yb.size + T.nrows)
        for i in range(h):
            out[i * self.Yb.size:(i + 1) * self.Yb.size] = \
                self.Yb - self.YaC @ (self.Apow[i] @ x)
        out[h * self.Yb.size:] = T.c - T.T_x @ (self.Apow[h] @ x) - T.T_v @ v
        return out

    def feasible(self, h, x, v, mu0=None):
        """Returns (feasible, mu, violation) for horizon h at (x, v)."""
        T = self.design.T
        if h == 0:
            w = np.concatenate([x, v])
            margin = float(np.max(T.set_xv.A @ w - T.c, initial=0.0))
            return margin <= TOL, np.zeros(0), margin
        t, mu, outcome = min_violation(self.rows(h), self.rhs(h, x, v),
                                       x0=mu0)
        if outcome not in ("feasible", "optimal"):
            raise RuntimeError(
                "feasibility LP failed at horizon {} ({})".format(h, outcome))
        return t <= TOL, mu, t


def ocp_feasible(plant, design, x, v, horizon):
    """Feasibility of the horizon-specific problem at (x, v) by a direct
    phase-1 LP (horizon 0 reduces to terminal-set membership)."""
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    x = np.asarray(x, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    oracle = _HorizonOracle(plant, design, max(horizon, 1))
    ok, _, _ = oracle.feasible(horizon, x, v)
    return ok


def n_star(plant, design, x0, r, cap, trace=None):
    """Smallest horizon i <= cap whose problem is feasible at (x0, r).

    Linear upward scan from 0: feasibility is monotone in the horizon, each
    LP is cheap, and the scan doubles as a monotonicity audit. The search
    never constructs feasible-set projections. When given, trace collects
    one (horizon, worst violation) pair per probed horizon.
    """
    if cap < 1:
        raise ValueError("cap must be at least 1")
    x0 = np.asarray(x0, dtype=float).ravel()
    r = np.asarray(r, dtype=float).ravel()
    em = equilibrium_basis(plant)
    u_pad = em.G_u @ r
    oracle = _HorizonOracle(plant, design, cap)
    mu = np.zeros(0)
    for h in range(cap + 1):
        mu0 = np.concatenate([mu, u_pad]) if h else None
        ok, mu_found, viol = oracle.feasible(h, x0, r, mu0=mu0)
        if trace is not None:
            trace.append((h, viol))
        if ok:
            return h
        mu = mu_found if h else mu
    raise RuntimeError("no feasible horizon <= {}".format(cap))
