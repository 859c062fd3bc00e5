"""Offline computation of the invariant error ellipsoid under stealthy attack.

With a steady-state estimator gain ``L`` and innovation covariance
``S``, the estimation error under a detector-evading sensor attack obeys

    e(k+1) = A e(k) + w(k) - L S^{1/2} xi(k),

where the attacker's whitened injection satisfies ``||xi||^2 <= tau``
whenever it stays below the detector threshold, and ``||w||^2 <= w_bar``
with probability ``p``.  An ellipsoid ``{e : e^T P e <= 1}`` is
invariant for this system when, for some ``b in (0, 1)``,

    V(e+) <= b V(e) + (1 - b) (||w||^2 + ||xi||^2) / (tau + w_bar),

a condition equivalent (S-procedure plus a Schur complement on the
``P`` block) to positive semidefiniteness of the order ``3n + m``
block matrix assembled by :func:`stability_lmi`.  The minimum-volume
such ellipsoid solves, per grid value of ``b``,

    minimize  -log det P   subject to  P > 0,  Q(P, b) >= 0,

a max-det problem we solve with an in-repo log-det barrier interior
point method (see :func:`solve_invariance_program`); the grid search
over ``b`` and the packaging of the winner into a reusable certificate
live in :func:`compute_certificate`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import CertificateError, DimensionError, DomainError
from .geometry import Ellipsoid
from .linalg import (
    as_matrix,
    as_vector,
    check_symmetric,
    is_positive_definite,
    sym_sqrt_psd,
    try_cholesky,
)

__all__ = [
    "NoiseEnergyBound",
    "noise_energy_bound",
    "stability_lmi",
    "InfeasibleMarker",
    "INFEASIBLE",
    "SolveResult",
    "solve_invariance_program",
    "ReachCertificate",
    "compute_certificate",
    "verify_certificate",
    "instantiate_reach_set",
    "LMI_RECHECK_TOL",
]

# Relative floor for the eigenvalue recheck of a returned solution:
# min eig(Q) >= -LMI_RECHECK_TOL * max eig(Q).
LMI_RECHECK_TOL = 1e-8

_QUANTILE_MC_SAMPLES = 1_000_000
_QUANTILE_MC_SEED = 20240917
_QUANTILE_MC_BATCHES = 20


@dataclass(frozen=True)
class NoiseEnergyBound:
    """p-quantile of the squared process-noise norm, with its MC error.

    ``std_error`` is zero when the quantile has a closed form (isotropic
    or zero covariance) and a batch-estimate standard error otherwise.
    """

    value: float
    std_error: float
    p: float


def noise_energy_bound(sigma1: np.ndarray, p: float) -> NoiseEnergyBound:
    """Bound ``w_bar`` with ``P(||w||^2 <= w_bar) = p`` for w ~ N(0, sigma1).

    ``||w||^2`` is a nonnegative mixture ``sum_i lam_i chi2_i(1)`` over
    the eigenvalues of ``sigma1``.  Equal eigenvalues give the scaled
    chi-square quantile exactly; otherwise the quantile is estimated by
    Monte Carlo with a fixed seed (10^6 draws, batched standard error).
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"confidence level must be in (0, 1), got {p}")
    s = check_symmetric(as_matrix(sigma1, name="sigma1"), "sigma1")
    lam = np.linalg.eigvalsh(s)
    lam = np.clip(lam, 0.0, None)
    n = lam.size
    top = float(lam[-1])
    if top == 0.0:
        return NoiseEnergyBound(0.0, 0.0, p)
    active = lam[lam > 1e-12 * top]
    if np.allclose(active, active[0], rtol=1e-10, atol=0.0) and active.size == n:
        value = float(active[0]) * float(stats.chi2.ppf(p, df=n))
        return NoiseEnergyBound(value, 0.0, p)
    if active.size == 1:
        value = float(active[0]) * float(stats.chi2.ppf(p, df=1))
        return NoiseEnergyBound(value, 0.0, p)

    rng = np.random.default_rng(_QUANTILE_MC_SEED)
    draws = rng.standard_normal((_QUANTILE_MC_SAMPLES, active.size))
    energy = (draws * draws) @ active
    value = float(np.quantile(energy, p))
    per_batch = [
        float(np.quantile(chunk, p))
        for chunk in np.array_split(energy, _QUANTILE_MC_BATCHES)
    ]
    std_error = float(np.std(per_batch, ddof=1) / math.sqrt(_QUANTILE_MC_BATCHES))
    return NoiseEnergyBound(value, std_error, p)


def _decay_weight(b: float, tau: float, w_bar: float) -> float:
    return (1.0 - b) / (tau + w_bar)


def stability_lmi(
    a: np.ndarray,
    gain: np.ndarray,
    sigma: np.ndarray,
    tau: float,
    w_bar: float,
    b: float,
    p_mat: np.ndarray,
) -> np.ndarray:
    """Assemble the order ``3n + m`` invariance LMI matrix for a given P.

    Block layout (row/column partition sizes ``[n, n, n, m]``), with
    ``c = (1 - b)/(tau + w_bar)`` and ``H = sigma^{1/2}``:

        [ bP     A^T P   0      0       ]
        [ P A    P       P      -P L H  ]
        [ 0      P       c I_n  0       ]
        [ 0      -H L^T P  0    c I_m   ]

    Positive semidefiniteness of this matrix is equivalent to the
    ellipsoid-invariance inequality in the module docstring.
    """
    a = as_matrix(a, name="A")
    n = a.shape[0]
    gain = as_matrix(gain, name="gain")
    m = gain.shape[1]
    sig_half = sym_sqrt_psd(check_symmetric(sigma, "sigma"))
    p_mat = check_symmetric(p_mat, "P")
    c = _decay_weight(b, tau, w_bar)
    lh = gain @ sig_half
    q = np.zeros((3 * n + m, 3 * n + m))
    q[:n, :n] = b * p_mat
    q[:n, n : 2 * n] = a.T @ p_mat
    q[n : 2 * n, :n] = p_mat @ a
    q[n : 2 * n, n : 2 * n] = p_mat
    q[n : 2 * n, 2 * n : 3 * n] = p_mat
    q[2 * n : 3 * n, n : 2 * n] = p_mat
    q[n : 2 * n, 3 * n :] = -p_mat @ lh
    q[3 * n :, n : 2 * n] = -lh.T @ p_mat
    q[2 * n : 3 * n, 2 * n : 3 * n] = c * np.eye(n)
    q[3 * n :, 3 * n :] = c * np.eye(m)
    return q


class InfeasibleMarker:
    """No invariant ellipsoid exists for the requested decay rate."""

    def __repr__(self):  # pragma: no cover
        return "INFEASIBLE"


INFEASIBLE = InfeasibleMarker()


@dataclass(frozen=True, eq=False)
class SolveResult:
    """One solved grid point of the max-det programme."""

    p_matrix: np.ndarray
    objective: float
    b: float
    q_margin: float  # min eig(Q) / max eig(Q) at the solution
    newton_steps: int


class _BarrierProblem:
    """Barrier formulation of one fixed-b max-det instance.

    The LMI matrix is affine in P:  Q(P) = C0 + sum_g (Xg P Yg^T +
    Yg P Xg^T) over five placement pairs, which gives closed forms for
    the barrier gradient and Hessian-vector products without ever
    materialising the n(n+1)/2-dimensional Hessian.
    """

    def __init__(self, a, gain, sig_half, tau, w_bar, b):
        n = a.shape[0]
        m = gain.shape[1]
        self.n, self.m = n, m
        d = 3 * n + m
        s1 = np.zeros((d, n)); s1[:n] = np.eye(n)
        s2 = np.zeros((d, n)); s2[n : 2 * n] = np.eye(n)
        s3 = np.zeros((d, n)); s3[2 * n : 3 * n] = np.eye(n)
        s4 = np.zeros((d, m)); s4[3 * n :] = np.eye(m)
        lh = gain @ sig_half
        self.pairs = [
            (s1, 0.5 * b * s1),
            (s1 @ a.T, s2),
            (s2, 0.5 * s2),
            (s2, s3),
            (s2, -s4 @ lh.T),
        ]
        c = _decay_weight(b, tau, w_bar)
        c0 = np.zeros((d, d))
        c0[2 * n : 3 * n, 2 * n : 3 * n] = c * np.eye(n)
        c0[3 * n :, 3 * n :] = c * np.eye(m)
        self.c0 = c0

    def lmi(self, p):
        q = self.c0.copy()
        for x, y in self.pairs:
            xp = x @ p
            q += xp @ y.T
            q += y @ xp.T
        return q

    def lmi_direction(self, d):
        """Directional derivative of Q along a symmetric direction d."""
        g = np.zeros_like(self.c0)
        for x, y in self.pairs:
            xd = x @ d
            g += xd @ y.T
            g += y @ xd.T
        return g

    def adjoint(self, m_big):
        """Adjoint of lmi_direction: maps d x d symmetric -> n x n."""
        out = np.zeros((self.n, self.n))
        for x, y in self.pairs:
            xm = x.T @ m_big
            out += xm @ y
            out += (y.T @ m_big) @ x
        return out


def _chol_inverse(chol):
    inv_l = np.linalg.inv(chol)
    return inv_l.T @ inv_l


def _logdet_from_chol(chol):
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def _frob(a, b):
    return float(np.tensordot(a, b))


def solve_invariance_program(
    a: np.ndarray,
    gain: np.ndarray,
    sigma: np.ndarray,
    tau: float,
    w_bar: float,
    b: float,
    *,
    mu_min: float = 1e-9,
    newton_tol: float = 1e-8,
    max_newton: int = 60,
):
    """Minimise ``-log det P`` over ``{P > 0 : Q(P, b) >= 0}``.

    Follows the central path of the barrier ``-log det P - mu log det
    Q(P)`` with ``mu`` halved from 1 down past ``mu_min``; each stage is
    minimised by inexact Newton steps (conjugate gradients on the
    Hessian in Frobenius geometry, preconditioned by ``D -> P D P``)
    with a backtracking line search that keeps both Cholesky factors
    alive.  Initialisation scans ``P = eta I`` over a geometric grid for
    the best-conditioned strictly feasible start.

    Returns a :class:`SolveResult`, or :data:`INFEASIBLE` when no
    strictly feasible scalar start exists (for this error system that is
    the generic infeasibility mode: the feasible set of ``eta`` along
    the identity ray is an interval, empty exactly when the decay rate
    ``b`` is unattainable).
    """
    a = as_matrix(a, name="A")
    n = a.shape[0]
    if a.shape != (n, n):
        raise DimensionError(f"A must be square, got {a.shape}")
    gain = as_matrix(gain, name="gain")
    if gain.shape[0] != n:
        raise DimensionError(f"gain has {gain.shape[0]} rows, expected {n}")
    sigma = check_symmetric(sigma, "sigma")
    if not is_positive_definite(sigma):
        raise DomainError("innovation covariance must be positive definite")
    if not 0.0 < b < 1.0:
        raise DomainError(f"decay rate b must be in (0, 1), got {b}")
    if tau <= 0 or w_bar < 0:
        raise DomainError("need tau > 0 and w_bar >= 0")

    sig_half = sym_sqrt_psd(sigma)
    prob = _BarrierProblem(a, gain, sig_half, tau, w_bar, b)

    # --- strictly feasible start on the identity ray -------------------
    etas = np.geomspace(1e-10, 1e6, 161)
    best_eta, best_margin = None, 0.0
    eye = np.eye(n)
    for eta in etas:
        eigs = np.linalg.eigvalsh(prob.lmi(eta * eye))
        margin = eigs[0] / max(abs(eigs[-1]), 1e-300)
        if eigs[0] > 0 and margin > best_margin:
            best_eta, best_margin = eta, margin
    if best_eta is None:
        return INFEASIBLE

    p = best_eta * eye
    chol_p = np.linalg.cholesky(p)
    chol_q = np.linalg.cholesky(prob.lmi(p))

    def barrier_value(chol_p_, chol_q_, mu_):
        return -_logdet_from_chol(chol_p_) - mu_ * _logdet_from_chol(chol_q_)

    total_newton = 0
    mu = 1.0
    while mu >= mu_min:
        for _ in range(max_newton):
            p_inv = _chol_inverse(chol_p)
            q_inv = _chol_inverse(chol_q)
            grad = -p_inv - mu * prob.adjoint(q_inv)

            def hess(d):
                return p_inv @ d @ p_inv + mu * prob.adjoint(
                    q_inv @ prob.lmi_direction(d) @ q_inv
                )

            def precond(r):
                return p @ r @ p

            step = _cg_symmetric(hess, -grad, precond)
            dec2 = -_frob(grad, step)
            total_newton += 1
            if dec2 <= newton_tol:
                break

            slope = _frob(grad, step)
            phi0 = barrier_value(chol_p, chol_q, mu)
            t = 1.0
            accepted = False
            while t > 1e-13:
                cand = p + t * step
                cand = 0.5 * (cand + cand.T)
                cp = try_cholesky(cand)
                if cp is not None:
                    cq = try_cholesky(prob.lmi(cand))
                    if cq is not None and barrier_value(cp, cq, mu) <= phi0 + 0.25 * t * slope:
                        p, chol_p, chol_q = cand, cp, cq
                        accepted = True
                        break
                t *= 0.5
            if not accepted:
                break
        mu *= 0.5

    q_eigs = np.linalg.eigvalsh(prob.lmi(p))
    q_margin = float(q_eigs[0] / max(abs(q_eigs[-1]), 1e-300))
    if q_eigs[0] < -LMI_RECHECK_TOL * abs(q_eigs[-1]):
        # The line search never leaves the strict interior, so this
        # indicates catastrophic numerics rather than a usable solution.
        return INFEASIBLE
    objective = -float(np.linalg.slogdet(p)[1])
    return SolveResult(
        p_matrix=p, objective=objective, b=b, q_margin=q_margin,
        newton_steps=total_newton,
    )


def _cg_symmetric(apply_h, rhs, precond, rel_tol=1e-8, max_iter=None):
    """Conjugate gradients on symmetric matrices under the Frobenius form."""
    if max_iter is None:
        k = rhs.shape[0]
        max_iter = max(200, 2 * k * (k + 1) // 2)
    x = np.zeros_like(rhs)
    r = rhs.copy()
    rhs_norm = math.sqrt(_frob(rhs, rhs))
    if rhs_norm == 0.0:
        return x
    z = precond(r)
    d = z.copy()
    rz = _frob(r, z)
    for _ in range(max_iter):
        hd = apply_h(d)
        dhd = _frob(d, hd)
        if dhd <= 0:
            break
        alpha = rz / dhd
        x += alpha * d
        r -= alpha * hd
        if math.sqrt(_frob(r, r)) <= rel_tol * rhs_norm:
            break
        z = precond(r)
        rz_next = _frob(r, z)
        d = z + (rz_next / rz) * d
        rz = rz_next
    return 0.5 * (x + x.T)


@dataclass(frozen=True, eq=False)
class ReachCertificate:
    """Invariant-ellipsoid certificate for one plant + estimator + detector.

    ``pi`` is the shape matrix of the error ellipsoid
    ``{e : e^T pi^{-1} e <= 1}`` (the inverse of the optimal ``P``);
    ``gain`` and ``innovation_cov`` are carried along so the LMI can be
    re-verified on load and the certificate tied to its estimator.
    """

    pi: np.ndarray
    b_star: float
    p: float
    w_bar: float
    objective: float
    beta: float
    tau: float
    gain: np.ndarray
    innovation_cov: np.ndarray
    w_bar_std_error: float = 0.0

    def __post_init__(self):
        pi = check_symmetric(as_matrix(self.pi, name="pi"), "pi")
        if not is_positive_definite(pi):
            raise CertificateError("certificate shape matrix must be positive definite")
        gain = as_matrix(self.gain, name="gain")
        sig = check_symmetric(as_matrix(self.innovation_cov, name="innovation_cov"))
        for arr in (pi, gain, sig):
            arr.flags.writeable = False
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "gain", gain)
        object.__setattr__(self, "innovation_cov", sig)

    @property
    def n(self) -> int:
        return self.pi.shape[0]


def compute_certificate(
    model,
    calibration,
    *,
    beta: float,
    p: float | None = None,
    delta_h: float,
    tau: float | None = None,
) -> ReachCertificate:
    """Grid-search the decay rate and keep the tightest invariant ellipsoid.

    Sweeps ``b = delta_h, 2 delta_h, ... < 1``, solving the max-det
    programme at each feasible point, and returns the certificate for
    the minimiser of ``-log det P``.  ``model`` is a
    :class:`~reachmon.plant.PlantModel`; ``calibration`` supplies the
    estimator gain and innovation covariance.  ``p`` is the confidence
    level of the process-noise energy bound and defaults to ``1 - beta``.

    Raises:
        CertificateError: every grid point infeasible (message carries
            the per-b outcomes).
    """
    from .estimation import chi_square_threshold  # local: avoid cycle at import

    if not 0.0 < delta_h < 1.0:
        raise DomainError(f"grid step must be in (0, 1), got {delta_h}")
    if p is None:
        p = 1.0 - beta
    if tau is None:
        tau = chi_square_threshold(model.n_sensors, beta)
    bound = noise_energy_bound(model.process_cov, p)

    grid = []
    k = 1
    while k * delta_h < 1.0 - 1e-12:
        grid.append(k * delta_h)
        k += 1

    best: SolveResult | None = None
    outcomes: list[tuple[float, float | None]] = []
    for b in grid:
        res = solve_invariance_program(
            model.a, calibration.gain, calibration.innovation_cov,
            tau, bound.value, b,
        )
        if isinstance(res, InfeasibleMarker):
            outcomes.append((b, None))
            continue
        outcomes.append((b, res.objective))
        if best is None or res.objective < best.objective:
            best = res
    if best is None:
        lines = ", ".join(f"b={b:.4g}: infeasible" for b, _ in outcomes)
        raise CertificateError(f"no feasible decay rate on the grid ({lines})")

    pi = np.linalg.inv(best.p_matrix)
    pi = 0.5 * (pi + pi.T)
    return ReachCertificate(
        pi=pi, b_star=best.b, p=p, w_bar=bound.value, objective=best.objective,
        beta=beta, tau=tau, gain=calibration.gain,
        innovation_cov=calibration.innovation_cov,
        w_bar_std_error=bound.std_error,
    )


def verify_certificate(cert: ReachCertificate, a: np.ndarray) -> float:
    """Re-check the invariance LMI for a stored certificate.

    Returns the relative eigenvalue margin ``min eig(Q)/max eig(Q)``;
    raises :class:`CertificateError` when it falls below the recheck
    tolerance, meaning the stored ellipsoid does not certify this plant.
    """
    p_mat = np.linalg.inv(cert.pi)
    p_mat = 0.5 * (p_mat + p_mat.T)
    q = stability_lmi(a, cert.gain, cert.innovation_cov, cert.tau, cert.w_bar,
                      cert.b_star, p_mat)
    eigs = np.linalg.eigvalsh(q)
    margin = float(eigs[0] / max(abs(eigs[-1]), 1e-300))
    if eigs[0] < -LMI_RECHECK_TOL * abs(eigs[-1]):
        raise CertificateError(
            f"stored ellipsoid fails the invariance check (margin {margin:.3e})"
        )
    return margin


def instantiate_reach_set(cert: ReachCertificate, x_hat: np.ndarray) -> Ellipsoid:
    """Translate the certified error ellipsoid to the current estimate.

    Constant-time: the returned ellipsoid references the certificate's
    shape matrix rather than copying it, so repeated instantiations
    share one matrix.
    """
    center = as_vector(np.array(x_hat, dtype=float), cert.n, "x_hat")
    return Ellipsoid.trusted(center, cert.pi)
