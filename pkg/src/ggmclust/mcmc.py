"""Chib-Jeliazkov estimate of the log marginal likelihood.

Parameters are ordered ``theta_1 = Sigma_eps, theta_2..theta_{k+1} =
Sigma_1..Sigma_k``. The posterior ordinate at the MAP factorizes into
stage ordinates ``p(theta_hat_i | X, theta_hat_{<i})``; stage `i` is
estimated from a reduced Metropolis-Hastings-within-Gibbs run with
``theta_{<i}`` clamped at the mode, using independence inverse-Wishart
proposals centered on the mode.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy.special import logsumexp

from .admm import MapSolution
from .core import Clustering, Hyperparams, SampleStats
from .linalg import inv_spd, logdet_spd
from .wishart import multigamma_log

__all__ = [
    "McmcConfig",
    "ChibEstimate",
    "EstimateFailure",
    "InvWishart",
    "JointDensity",
    "acceptance_prob",
    "proposals",
    "mh_within_gibbs",
    "chib_log_marginal",
    "gelman_rubin_mpsrf",
]

log = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)
SE_FLOOR = 1e-8
LOW_ACCEPTANCE = 0.01


class EstimateFailure(RuntimeError):
    """Raised when a stage's Monte Carlo average underflows to zero."""


@dataclass(frozen=True)
class McmcConfig:
    """Sampler settings.

    `burn_in_frac` * `samples` extra sweeps are discarded before the
    `samples` kept sweeps of every reduced run.
    """

    samples: int = 10000
    burn_in_frac: float = 0.10
    kappa: float = 10.0
    seed: int = 0
    batches: int = 50
    keep_chain: bool = False

    def __post_init__(self):
        if self.samples < 100:
            raise ValueError("samples must be >= 100")
        if not 0.0 <= self.burn_in_frac < 1.0:
            raise ValueError("burn_in_frac must lie in [0, 1)")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not 2 <= self.batches <= self.samples:
            raise ValueError("batches must lie in [2, samples]")

    @property
    def burn_in(self) -> int:
        return int(round(self.burn_in_frac * self.samples))


@dataclass(eq=False)
class ChibEstimate:
    """Result of :func:`chib_log_marginal`.

    ``log_marginal = log_joint_at_mode - sum(per_stage_log_ordinates)``.
    """

    log_marginal: float
    log_joint_at_mode: float
    per_stage_log_ordinates: tuple
    acceptance_rates: tuple
    std_error: float
    psrf: float | None = None
    chain: np.ndarray | None = field(default=None, repr=False)


class InvWishart:
    """Inverse-Wishart distribution with cached normalizer and factors."""

    def __init__(self, nu: float, Psi):
        Psi = np.atleast_2d(np.asarray(Psi, dtype=float))
        d = Psi.shape[0]
        if not nu > d - 1:
            raise ValueError(f"nu must exceed d - 1 = {d - 1}, got {nu}")
        self.nu, self.Psi, self.d = float(nu), Psi, d
        self._const = 0.5 * nu * logdet_spd(Psi) - 0.5 * nu * d * np.log(2.0) - multigamma_log(d, 0.5 * nu)
        self._chol_inv = sla.cholesky(inv_spd(Psi), lower=True)
        self._il = np.tril_indices(d, -1)

    def logpdf(self, Sigma, precision=None, logdet=None) -> float:
        """Log density; `precision` and `logdet` of `Sigma` may be supplied."""
        if precision is None:
            precision = inv_spd(Sigma)
        if logdet is None:
            logdet = logdet_spd(Sigma)
        return float(self._const - 0.5 * (self.nu + self.d + 1) * logdet - 0.5 * np.sum(self.Psi * precision))

    def sample(self, rng: np.random.Generator):
        """One draw as ``(Sigma, precision, logdet Sigma)``."""
        d = self.d
        A = np.zeros((d, d))
        A[np.diag_indices(d)] = np.sqrt(rng.chisquare(self.nu - np.arange(d)))
        A[self._il] = rng.standard_normal(len(self._il[0]))
        T = self._chol_inv @ A
        # precision = T T^T; Sigma = T^{-T} T^{-1}
        Tinv = sla.solve_triangular(T, np.eye(d), lower=True, check_finite=False)
        Sigma = Tinv.T @ Tinv
        Sigma = 0.5 * (Sigma + Sigma.T)
        precision = T @ T.T
        logdet = -2.0 * float(np.sum(np.log(np.abs(np.diag(T)))))
        return Sigma, precision, logdet


class JointDensity:
    """``log p(X, Sigma_eps, Sigma_1..Sigma_k)`` over a state of precisions.

    A state is a list of ``(precision, logdet Sigma)`` pairs in stage order
    (noise first, then clusters).
    """

    def __init__(self, stats: SampleStats, clustering: Clustering, hyper: Hyperparams):
        hyper.check_compatible(clustering)
        if clustering.p != stats.p:
            raise ValueError("clustering and stats dimensions differ")
        self.stats, self.clustering, self.hyper = stats, clustering, hyper
        self.ixs = [np.ix_(idx, idx) for idx in clustering.blocks()]
        self.priors = [InvWishart(hyper.nu_eps, hyper.scale_eps)] + [
            InvWishart(nu, sc) for nu, sc in zip(hyper.nu_blocks, hyper.scale_blocks)
        ]

    def term(self, i, precision, logdet) -> float:
        return self.priors[i].logpdf(None, precision, logdet)

    def loglik(self, state) -> float:
        st, beta = self.stats, self.hyper.beta
        W = beta * state[0][0] if beta > 0 else np.zeros((st.p, st.p))
        for ix, (P, _) in zip(self.ixs, state[1:]):
            W[ix] += P
        n = st.n
        return 0.5 * n * (logdet_spd(W) - np.sum(st.S * W)) - 0.5 * n * st.p * _LOG_2PI

    def __call__(self, state) -> float:
        return self.loglik(state) + sum(self.term(i, P, ld) for i, (P, ld) in enumerate(state))


def acceptance_prob(log_target_current, log_target_proposed, log_q_current, log_q_proposed) -> float:
    """Independence Metropolis-Hastings acceptance probability.

    ``min(1, p(prop) q(cur) / (p(cur) q(prop)))`` evaluated in log space.
    """
    vals = (log_target_current, log_target_proposed, log_q_current, log_q_proposed)
    if not all(np.isfinite(v) for v in vals):
        raise FloatingPointError("non-finite density in acceptance probability")
    return float(np.exp(min(0.0, log_target_proposed + log_q_current - log_target_current - log_q_proposed)))


def _log_accept(lp_cur, lp_prop, lq_cur, lq_prop):
    return min(0.0, lp_prop + lq_cur - lp_cur - lq_prop)


def proposals(map_sol: MapSolution, stats: SampleStats, hyper: Hyperparams, kappa: float) -> list:
    """Independence proposals ``q_1..q_{k+1}``, each with its mode at the MAP.

    Noise: ``nu = beta kappa n + nu_eps``; cluster `j`:
    ``nu = (1 - beta) kappa n + nu_j``; the scale is ``(nu + d + 1)`` times
    the MAP covariance.
    """
    n, beta = stats.n, hyper.beta
    nu = beta * kappa * n + hyper.nu_eps
    out = [InvWishart(nu, (nu + stats.p + 1) * map_sol.sigma_eps)]
    for nu_j, Sj in zip(hyper.nu_blocks, map_sol.sigma_blocks):
        nu = (1.0 - beta) * kappa * n + nu_j
        out.append(InvWishart(nu, (nu + Sj.shape[0] + 1) * Sj))
    return out


class _Sampler:
    """MH-within-Gibbs state over stages ``start..K-1`` with earlier stages fixed."""

    def __init__(self, joint: JointDensity, qs, mode_state, start, rng):
        self.joint, self.qs, self.start, self.rng = joint, qs, start, rng
        self.state = list(mode_state)
        self.lq = [q.logpdf(None, P, ld) for q, (P, ld) in zip(qs, self.state)]
        self.lp = joint(self.state)
        K = len(self.state)
        self.accepted = np.zeros(K, dtype=np.int64)
        self.sweeps = 0

    def sweep(self):
        joint, qs, st = self.joint, self.qs, self.state
        for i in range(self.start, len(st)):
            _, P, ld = qs[i].sample(self.rng)
            lq_prop = qs[i].logpdf(None, P, ld)
            old = st[i]
            st[i] = (P, ld)
            lp_prop = joint(st)
            la = _log_accept(self.lp, lp_prop, self.lq[i], lq_prop)
            if np.log(self.rng.uniform()) < la:
                self.lp, self.lq[i] = lp_prop, lq_prop
                self.accepted[i] += 1
            else:
                st[i] = old
        self.sweeps += 1

    def rates(self):
        return self.accepted[self.start:] / max(self.sweeps, 1)


def _mode_state(map_sol: MapSolution):
    Xs = [map_sol.X_eps] + list(map_sol.X_blocks)
    return [(0.5 * (X + X.T), -logdet_spd(X)) for X in Xs]


def _vech_state(state):
    parts = []
    for P, _ in state:
        S = inv_spd(P)
        parts.append(S[np.tril_indices(S.shape[0])])
    return np.concatenate(parts)


def mh_within_gibbs(
    stats: SampleStats,
    clustering: Clustering,
    hyper: Hyperparams,
    map_sol: MapSolution,
    cfg: McmcConfig,
    start: int = 0,
    rng: np.random.Generator | None = None,
):
    """Run one reduced MH-within-Gibbs chain and return its kept states.

    Stages ``< start`` (0-based) stay at the MAP. Returns ``(chain,
    acceptance_rates)`` where ``chain`` has one row per kept sweep holding
    the vectorized lower triangles of all covariances in stage order.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    joint = JointDensity(stats, clustering, hyper)
    K = clustering.k + 1
    if not 0 <= start < K:
        raise ValueError(f"start must lie in [0, {K - 1}]")
    qs = proposals(map_sol, stats, hyper, cfg.kappa)
    smp = _Sampler(joint, qs, _mode_state(map_sol), start, rng)
    for _ in range(cfg.burn_in):
        smp.sweep()
    smp.accepted[:] = 0
    smp.sweeps = 0
    rows = []
    for _ in range(cfg.samples):
        smp.sweep()
        rows.append(_vech_state(smp.state))
    rates = smp.rates()
    if np.any(rates < LOW_ACCEPTANCE):
        log.warning("acceptance rate below 1%% in stage run %d: %s", start, np.round(rates, 4))
    return np.asarray(rows), rates


def _batch_var_of_mean(x, batches):
    m = len(x) // batches
    if m < 1:
        return float(np.var(x, ddof=1) / len(x))
    bm = x[: m * batches].reshape(batches, m).mean(axis=1)
    return float(np.var(bm, ddof=1) / batches)


def chib_log_marginal(
    stats: SampleStats,
    clustering: Clustering,
    hyper: Hyperparams,
    map_sol: MapSolution,
    cfg: McmcConfig | None = None,
    chain_path=None,
) -> ChibEstimate:
    """Chib-Jeliazkov estimate of ``log p(X | C)`` at the MAP.

    Reduced run `i` (stages ``< i`` clamped) supplies the numerator average
    ``mean_m alpha(theta_i^m -> theta_hat_i) q_i(theta_hat_i)`` of stage `i`
    and, paired with fresh draws from ``q_{i-1}``, the denominator average
    ``mean_m alpha(theta_hat_{i-1} -> theta^q)`` of stage ``i - 1``. The last
    stage's denominator uses proposal draws only. Averages are accumulated
    in log space.

    The standard error combines batch-means variances of each run's
    contribution through the delta method, floored at 1e-8.

    Parameters
    ----------
    chain_path : path, optional
        Write the first reduced run (all parameters free) as CSV of
        vectorized lower triangles.
    """
    cfg = cfg or McmcConfig()
    joint = JointDensity(stats, clustering, hyper)
    qs = proposals(map_sol, stats, hyper, cfg.kappa)
    K = clustering.k + 1
    mode = _mode_state(map_sol)
    log_joint_mode = joint(mode)
    lq_mode = [q.logpdf(None, P, ld) for q, (P, ld) in zip(qs, mode)]
    seeds = np.random.SeedSequence(cfg.seed).spawn(K + 1)
    M = cfg.samples

    log_num = np.empty(K)
    log_den = np.empty(K)
    rates = []
    variance = 0.0
    chain = None
    writer = fh = None
    if chain_path is not None:
        fh = open(chain_path, "w", newline="")
        writer = csv.writer(fh)
    try:
        for s in range(K):
            rng = np.random.default_rng(seeds[s])
            smp = _Sampler(joint, qs, mode, s, rng)
            for _ in range(cfg.burn_in):
                smp.sweep()
            smp.accepted[:] = 0
            smp.sweeps = 0
            la_num = np.empty(M)
            la_den = np.empty(M) if s > 0 else None
            keep = cfg.keep_chain and s == 0
            rows = [] if keep else None
            for m in range(M):
                smp.sweep()
                st = smp.state
                # numerator of stage s: move from the current theta_s to the mode
                cur = st[s]
                st[s] = mode[s]
                lp_mode = joint(st)
                st[s] = cur
                la_num[m] = _log_accept(smp.lp, lp_mode, smp.lq[s], lq_mode[s])
                if s > 0:
                    # denominator of stage s-1: theta_{s-1} at its mode, move to a q draw
                    la_den[m] = _den_term(joint, qs[s - 1], st, s - 1, lq_mode[s - 1], rng)
                if keep or writer is not None:
                    vec = _vech_state(st)
                    if keep:
                        rows.append(vec)
                    if writer is not None and s == 0:
                        writer.writerow([repr(float(v)) for v in vec])
            rates.append(float(np.mean(smp.rates())))
            if keep:
                chain = np.asarray(rows)
            log_num[s] = logsumexp(la_num) - np.log(M) + lq_mode[s]
            g = -np.exp(la_num - logsumexp(la_num) + np.log(M))
            if s > 0:
                log_den[s - 1] = logsumexp(la_den) - np.log(M)
                g = g + np.exp(la_den - log_den[s - 1]) if np.isfinite(log_den[s - 1]) else g
            variance += _batch_var_of_mean(g, cfg.batches)

        # last stage: everything else at the mode
        rng = np.random.default_rng(seeds[K])
        st = list(mode)
        la_den = np.array([_den_term(joint, qs[K - 1], st, K - 1, lq_mode[K - 1], rng) for _ in range(M)])
        log_den[K - 1] = logsumexp(la_den) - np.log(M)
        if np.isfinite(log_den[K - 1]):
            variance += float(np.var(np.exp(la_den - log_den[K - 1]), ddof=1) / M)
    finally:
        if fh is not None:
            fh.close()

    if not np.all(np.isfinite(log_den)) or not np.all(np.isfinite(log_num)):
        raise EstimateFailure("a Monte Carlo acceptance average is zero; increase kappa")
    ordinates = log_num - log_den
    value = log_joint_mode - float(np.sum(ordinates))
    return ChibEstimate(
        log_marginal=float(value),
        log_joint_at_mode=float(log_joint_mode),
        per_stage_log_ordinates=tuple(float(v) for v in ordinates),
        acceptance_rates=tuple(rates),
        std_error=max(float(np.sqrt(variance)), SE_FLOOR),
        chain=chain,
    )


def _den_term(joint, q, st, i, lq_mode_i, rng):
    _, P, ld = q.sample(rng)
    lq_prop = q.logpdf(None, P, ld)
    saved = st[i]
    lp_mode = joint(st)
    st[i] = (P, ld)
    lp_prop = joint(st)
    st[i] = saved
    return _log_accept(lp_mode, lp_prop, lq_mode_i, lq_prop)


def gelman_rubin_mpsrf(chains) -> float:
    """Multivariate potential scale reduction factor.

    Parameters
    ----------
    chains : sequence of (n, d) arrays
        At least two chains of equal length ``n >= 10``.

    Returns
    -------
    float
        ``(n - 1)/n + (m + 1)/m * lambda_max(W^{-1} B / n)``, where ``W`` is
        the mean within-chain covariance and ``B / n`` the covariance of the
        chain means.
    """
    arrs = [np.asarray(c, dtype=float) for c in chains]
    arrs = [a[:, None] if a.ndim == 1 else a for a in arrs]
    m = len(arrs)
    if m < 2:
        raise ValueError("need at least two chains")
    n, d = arrs[0].shape
    if any(a.shape != (n, d) for a in arrs):
        raise ValueError("chains must have equal shapes")
    if n < 10:
        raise ValueError("chains must have at least 10 draws")
    Wm = sum(np.atleast_2d(np.cov(a, rowvar=False)) for a in arrs) / m
    # the statistic is invariant to coordinate scaling; rescale to unit within-chain variance
    sd = np.sqrt(np.diag(Wm))
    if np.any(sd <= 0):
        raise ValueError("degenerate chains: a coordinate has zero within-chain variance")
    arrs = [a / sd for a in arrs]
    Wm = Wm / np.outer(sd, sd)
    means = np.array([a.mean(axis=0) for a in arrs])
    Bn = np.atleast_2d(np.cov(means, rowvar=False))
    try:
        lam = sla.eigvalsh(Bn, Wm)[-1]
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise ValueError("degenerate chains: within-chain covariance is singular") from exc
    return float((n - 1) / n + (m + 1) / m * lam)
