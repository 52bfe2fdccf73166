"""LQR synthesis and the tracking terminal set.

solve_dare finds the stabilizing solution of the discrete algebraic
Riccati equation by fixed-point iteration and returns the terminal weight
P together with the gain K. terminal_set builds the maximal output
admissible set of the reference-augmented closed loop, with the
steady-state rows tightened by epsilon so the iteration is finitely
determined.
"""

import numpy as np

from fgmpc.polytope import HPolyhedron

_ASSUMPTION_TOL = 1e-8
_DARE_RESIDUAL = 1e-8
_DARE_CAP = 10_000
_TERMINAL_CAP = 500


class RiccatiSolution:
    """Terminal weight P and LQR gain K with a Schur-stable closed loop."""

    def __init__(self, P, K):
        self.P = np.atleast_2d(np.asarray(P, dtype=float))
        self.K = np.atleast_2d(np.asarray(K, dtype=float))
        self.P.setflags(write=False)
        self.K.setflags(write=False)


def _check_symmetric(M, name):
    if np.max(np.abs(M - M.T), initial=0.0) > 1e-10:
        raise ValueError("{} must be symmetric".format(name))


def solve_dare(A, B, Q, R, max_iterations=_DARE_CAP):
    """Fixed-point solution of P = Q + A'PA - (A'PB)(R + B'PB)^{-1}(B'PA).

    Requires Q PSD with (A, Q) detectable and R PD (both checked), which
    together with stabilizability of (A, B) guarantee convergence to the
    unique stabilizing solution. Raises on assumption violations, and on
    non-convergence past max_iterations.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = A.shape[0]
    _check_symmetric(Q, "Q")
    _check_symmetric(R, "R")
    q_eigs = np.linalg.eigvalsh(Q)
    if q_eigs[0] < -1e-10:
        raise ValueError("Q must be positive semidefinite")
    try:
        np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise ValueError("R must be positive definite")
    # detectability of (A, Q): no unobservable mode on/outside the circle
    Qh = _psd_sqrt(Q)
    for lam in np.linalg.eigvals(A):
        if abs(lam) < 1.0 - _ASSUMPTION_TOL:
            continue
        pbh = np.vstack([lam * np.eye(n) - A, Qh])
        sv = np.linalg.svd(pbh, compute_uv=False)
        if sv[-1] <= _ASSUMPTION_TOL * max(1.0, sv[0]):
            raise ValueError(
                "(A, Q) is not detectable: the mode at magnitude {:.6g} "
                "is invisible to the cost".format(abs(lam)))

    P = Q.copy()
    for _ in range(max_iterations):
        BtPA = B.T @ P @ A
        gain = np.linalg.solve(R + B.T @ P @ B, BtPA)
        P_next = Q + A.T @ P @ A - BtPA.T @ gain
        P_next = 0.5 * (P_next + P_next.T)
        if _dare_residual(A, B, Q, R, P_next) <= _DARE_RESIDUAL:
            P = P_next
            break
        P = P_next
    else:
        raise RuntimeError("Riccati iteration did not converge within {} "
                           "iterations".format(max_iterations))
    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    closed = np.max(np.abs(np.linalg.eigvals(A - B @ K)))
    if not closed < 1.0:
        raise RuntimeError("closed loop is not Schur stable (spectral "
                           "radius {:.6g})".format(closed))
    return RiccatiSolution(P, K)


def _dare_residual(A, B, Q, R, P):
    BtP = B.T @ P
    term = (A.T @ BtP.T) @ np.linalg.solve(R + BtP @ B, BtP @ A)
    return np.linalg.norm(Q + A.T @ P @ A - term - P, ord="fro")


def _psd_sqrt(Q):
    w, V = np.linalg.eigh(Q)
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


class TerminalSet:
    """Invariant, output-admissible polytope {(x, v) : T_x x + T_v v <= c}.

    t_star is the number of forward constraint layers needed for finite
    determination.
    """

    def __init__(self, set_xv, n_x, t_star):
        self.set_xv = set_xv
        self.n_x = n_x
        self.t_star = t_star

    @property
    def T_x(self):
        return self.set_xv.A[:, :self.n_x]

    @property
    def T_v(self):
        return self.set_xv.A[:, self.n_x:]

    @property
    def c(self):
        return self.set_xv.b

    @property
    def nrows(self):
        return self.set_xv.nrows


def terminal_set(plant, em, rs, Y, eps, max_layers=_TERMINAL_CAP):
    """Maximal output admissible set of the reference-augmented loop.

    Under the terminal law u = -K x + (G_u + K G_x) v the augmented state
    w = (x, v) evolves autonomously:

        x+ = (A - B K) x + B (G_u + K G_x) v,    v+ = v,

    with output y = (C - D K) x + D (G_u + K G_x) v. The set collects the
    output constraint propagated through every forward step, plus the
    steady-state constraint tightened to (1 - eps) Y, which makes the
    iteration finitely determined. Layer t+1 is added only while it is not
    already implied (containment LP test); rows are normalized and pruned
    each round.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie strictly between 0 and 1")
    n_x, n_v = plant.n_x, em.n_v
    K = rs.K
    L_v = em.G_u + K @ em.G_x  # feedforward to the reference
    A_cl = np.block([
        [plant.A - plant.B @ K, plant.B @ L_v],
        [np.zeros((n_v, n_x)), np.eye(n_v)],
    ])
    Ymat = np.hstack([plant.C - plant.D @ K, plant.D @ L_v])
    ss_rows = np.hstack([np.zeros((plant.n_y, n_x)),
                         plant.C @ em.G_x + plant.D @ em.G_u])

    # steady-state tightened rows plus the t=0 output layer
    current = HPolyhedron(
        np.vstack([Y.A @ ss_rows, Y.A @ Ymat]),
        np.concatenate([(1.0 - eps) * Y.b, Y.b]),
    ).remove_redundancy()

    power = A_cl
    for t in range(max_layers):
        layer = HPolyhedron(Y.A @ Ymat @ power, Y.b)
        if layer.contains_set(current):
            return TerminalSet(current, n_x, t)
        current = current.intersect(layer).remove_redundancy()
        power = power @ A_cl
    raise RuntimeError("terminal set not finitely determined within {} "
                       "layers".format(max_layers))
