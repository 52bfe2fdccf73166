"""Feasibility governor and the command-governor baseline.

The governor sits between the target reference r and the MPC law: at each
step it solves

    g(x, r) = argmin { ||v - r||^2 : v in R_eps, (x, v) in Gamma_N },

handing the MPC the closest safely trackable reference. The joint
constraint set Lambda = Gamma_N intersected with the R_eps cylinder is
built offline; online only the measured x is substituted, leaving a QP in
v with few variables and many rows. The projection of Lambda onto x is
the governed region of attraction. The command-governor baseline applies
the same step over the terminal set, paired with the LQR law instead of
the MPC.
"""

import numpy as np

from fgmpc.polytope import HPolyhedron
from fgmpc.solver import QpProblem, Status, solve_qp


class RoaError(RuntimeError):
    """The queried state admits no feasible auxiliary reference."""


class GovernorProblem:
    """Offline governor data: Gamma_N, R_eps, and their joint set Lambda.

    Lambda = Gamma_N intersected with {(x, v) : v in R_eps}; the state
    dimension is recovered from the two operand dimensions.
    """

    def __init__(self, gamma, R_eps):
        if isinstance(gamma, HPolyhedron):
            gamma_set = gamma
        else:
            gamma_set = gamma.set_xv
        self.n_v = R_eps.dim
        self.n_x = gamma_set.dim - self.n_v
        if self.n_x < 1:
            raise ValueError("feasible set dimension {} leaves no state "
                             "coordinates after {} reference coordinates"
                             .format(gamma_set.dim, self.n_v))
        self.gamma = gamma_set
        self.R_eps = R_eps
        cylinder = HPolyhedron(
            np.hstack([np.zeros((R_eps.nrows, self.n_x)), R_eps.A]),
            R_eps.b)
        self.Lambda = gamma_set.intersect(cylinder).remove_redundancy()

    def slice_rows(self, x):
        """Rows of the v-only problem at the measured state x."""
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.n_x:
            raise ValueError("expected state of size {}".format(self.n_x))
        A = self.Lambda.A
        return A[:, self.n_x:], self.Lambda.b - A[:, :self.n_x] @ x


class GovernorState:
    """Carries the applied reference and the last solve record between
    steps of one control loop (used to warm start the next solve)."""

    def __init__(self, v=None):
        self.v = None if v is None else np.asarray(v, dtype=float).ravel()
        self.record = None


def _closest_in_rows(A_v, rhs, r, state=None,
                     message="state outside governed ROA"):
    r = np.asarray(r, dtype=float).ravel()
    n_v = A_v.shape[1]
    warm = None
    if state is not None and state.record is not None:
        warm = state.record.active_set
    problem = QpProblem(2.0 * np.eye(n_v), -2.0 * r, A_v, rhs)
    st = solve_qp(problem, warm_start=warm)
    if st.status == Status.INFEASIBLE:
        raise RoaError(message)
    if st.status != Status.OPTIMAL:
        raise RuntimeError("governor QP failed with status {}".format(
            st.status.name))
    if state is not None:
        state.v = st.x.copy()
        state.record = st
    return st.x.copy()


def fg_step(gp, x, r, state=None):
    """One feasibility-governor step: the admissible reference closest to r.

    Strictly convex, so the minimizer is unique; when (x, r*) is already
    in Lambda the result is r* itself (the governor does not interfere).
    The optional state carries the previous active set as a warm start.
    """
    A_v, rhs = gp.slice_rows(x)
    return _closest_in_rows(A_v, rhs, r, state=state)


def cg_step(T, R_eps, x, r, state=None):
    """Command-governor baseline: same projection, over the terminal set.

    The admissible pairs are (x, v) in T with v in R_eps; the paired
    control law is the terminal LQR law rather than the MPC."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != T.n_x:
        raise ValueError("expected state of size {}".format(T.n_x))
    A_v = np.vstack([T.T_v, R_eps.A])
    rhs = np.concatenate([T.c - T.T_x @ x, R_eps.b])
    return _closest_in_rows(A_v, rhs, r, state=state)


def r_star(R_eps, r):
    """Projection of the target onto the admissible reference set; the
    value the governed reference converges to in finite time."""
    return _closest_in_rows(R_eps.A, R_eps.b, r,
                            message="admissible reference set is empty")


def roa(gp, row_cap=None):
    """Governed region of attraction: the projection of Lambda onto x."""
    keep = list(range(gp.n_x))
    if row_cap is None:
        return gp.Lambda.project(keep)
    return gp.Lambda.project(keep, row_cap=row_cap)
