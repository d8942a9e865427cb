"""Incremental Gaussian mixture over the joint (input, output) space and
Gaussian mixture regression on top of it.

Components live in stacked arrays (``means`` is K x d, ``covs`` K x d x d)
so every per-sample operation is a handful of batched numpy calls.  The
first ``d_in`` coordinates are inputs, the rest outputs.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit
from scipy.stats import chi2

from .errors import ContractError

log = logging.getLogger(__name__)

EIG_FLOOR = 1e-9
LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class GaussianComponent:
    prior: float
    mean: np.ndarray
    cov: np.ndarray
    sp: float = 0.0
    age: int = 0


def floor_covariance(S: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    """Symmetrize and lift eigenvalues to ``floor`` (batched over leading axes)."""
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    try:
        np.linalg.cholesky(S - floor * np.eye(S.shape[-1]))
        return S
    except np.linalg.LinAlgError:
        pass
    w, V = np.linalg.eigh(S)
    if np.all(w >= floor):
        return S
    w = np.maximum(w, floor)
    S = (V * w[..., None, :]) @ np.swapaxes(V, -1, -2)
    return 0.5 * (S + np.swapaxes(S, -1, -2))


def _batched_cholesky(S):
    try:
        return np.linalg.cholesky(S), np.ones(S.shape[0], dtype=bool)
    except np.linalg.LinAlgError:
        L = np.zeros_like(S)
        ok = np.ones(S.shape[0], dtype=bool)
        for j in range(S.shape[0]):
            try:
                L[j] = np.linalg.cholesky(S[j])
            except np.linalg.LinAlgError:
                ok[j] = False
                L[j] = np.eye(S.shape[-1])
        return L, ok


@njit(cache=True)
def _cholesky_into(S, L):
    """Plain Cholesky of S into L; returns the row where it broke down, or -1."""
    d = S.shape[0]
    L[:] = 0.0
    for i in range(d):
        for j in range(i + 1):
            v = S[i, j]
            for c in range(j):
                v -= L[i, c] * L[j, c]
            if i == j:
                if not v > 0.0:
                    return i
                L[i, i] = np.sqrt(v)
            else:
                L[i, j] = v / L[j, j]
    return -1


@njit(cache=True)
def _factor_kernel(covs, idx, d_in, L_full, ok_full, L_in, ok_in, gain, logdet_full, logdet_in, tr_in):
    """Cholesky factors, regression gains, log determinants and ``|L_ii^-1|_F^2``."""
    d = covs.shape[1]
    d_out = d - d_in
    inv = np.empty((d_in, d_in))
    y = np.empty(d_in)
    for k in idx:
        S = covs[k]
        L = L_full[k]
        broke = _cholesky_into(S, L)
        ok_full[k] = broke < 0
        Li = L_in[k]
        if broke < 0:
            Li[:] = L[:d_in, :d_in]
            ok_in[k] = True
        else:
            ok_in[k] = _cholesky_into(S[:d_in, :d_in], Li) < 0
            L[:] = np.eye(d)
        if not ok_in[k]:
            Li[:] = np.eye(d_in)
        ld = 0.0
        for i in range(d):
            ld += np.log(L[i, i])
        logdet_full[k] = 2.0 * ld
        ld = 0.0
        for i in range(d_in):
            ld += np.log(Li[i, i])
        logdet_in[k] = 2.0 * ld
        # G = Soi Sii^-1: forward then backward substitution per output row
        for a in range(d_out):
            for i in range(d_in):
                v = S[d_in + a, i]
                for j in range(i):
                    v -= Li[i, j] * y[j]
                y[i] = v / Li[i, i]
            for i in range(d_in - 1, -1, -1):
                v = y[i]
                for j in range(i + 1, d_in):
                    v -= Li[j, i] * gain[k, a, j]
                gain[k, a, i] = v / Li[i, i]
        tr = 0.0
        for c in range(d_in):
            inv[c, c] = 1.0 / Li[c, c]
            tr += inv[c, c] * inv[c, c]
            for i in range(c + 1, d_in):
                v = 0.0
                for j in range(c, i):
                    v -= Li[i, j] * inv[j, c]
                inv[i, c] = v / Li[i, i]
                tr += inv[i, c] * inv[i, c]
        tr_in[k] = tr


@njit(cache=True)
def _log_weights(L, logbias, ok, means, x, hint, cut, d2_keep):
    """Squared Mahalanobis distances and log weights ``logbias - d2 / 2``.

    ``L`` holds Cholesky factors of the covariances over the leading
    ``len(x)`` coordinates and ``logbias`` the log prior minus half the log
    determinant.  A component's forward substitution stops as soon as its
    partial distance exceeds ``d2_keep`` and its log weight is certain to
    fall more than ``cut`` below the best one seen so far; at the end every
    component more than ``cut`` below the overall best is dropped, so the
    result does not depend on the visiting order.  Dropped components get
    ``d2 = inf`` and ``logw = -inf``.  ``hint`` is visited first.
    """
    K = L.shape[0]
    d = x.shape[0]
    d2 = np.full(K, np.inf)
    logw = np.full(K, -np.inf)
    z = np.empty(d)
    best = -np.inf
    for r in range(K + 1):
        if r == 0:
            k = hint
        else:
            k = r - 1
            if k == hint:
                continue
        if not ok[k]:
            continue
        acc = 0.0
        dead = False
        for i in range(d):
            v = x[i] - means[k, i]
            for j in range(i):
                v -= L[k, i, j] * z[j]
            z[i] = v / L[k, i, i]
            acc += z[i] * z[i]
            if acc > d2_keep and logbias[k] - 0.5 * acc < best - cut:
                dead = True
                break
        if dead:
            continue
        d2[k] = acc
        logw[k] = logbias[k] - 0.5 * acc
        if logw[k] > best:
            best = logw[k]
    for k in range(K):
        if logw[k] < best - cut and d2[k] > d2_keep:
            d2[k] = np.inf
            logw[k] = -np.inf
    return d2, logw


@njit(cache=True)
def _conditional_mean(logw, means, gain, x):
    """Responsibility-weighted conditional output means at ``x``."""
    K, d_out, d_in = gain.shape
    best = -np.inf
    for k in range(K):
        if logw[k] > best:
            best = logw[k]
    w = np.zeros(K)
    total = 0.0
    for k in range(K):
        if logw[k] > -np.inf:
            w[k] = np.exp(logw[k] - best)
            total += w[k]
    out = np.zeros(d_out)
    for k in range(K):
        if w[k] == 0.0:
            continue
        w[k] /= total
        for o in range(d_out):
            v = means[k, d_in + o]
            for i in range(d_in):
                v += gain[k, o, i] * (x[i] - means[k, i])
            out[o] += w[k] * v
    return out, w


@njit(cache=True)
def _shear(means, covs, L_full, gain, tr_in, shift, J, idx, d_in, floor):
    """Apply ``T = [[I, 0], [-J, I]]`` to the listed components in place.

    The mean outputs move by ``-shift``.  Because T is unit lower
    triangular, ``T L`` is again a Cholesky factor, so only the
    output-input block of ``L`` changes, the input and output diagonal
    blocks are untouched and the regression gain drops by ``J``.  The
    smallest eigenvalue is bounded below by ``1 / trace(Sigma^-1)`` with
    ``trace(Sigma^-1) = |L_ii^-1|^2 + |L_oo^-1|^2 + |L_oo^-1 G|^2``, the
    first term cached in ``tr_in``.  Returns a flag per component whose
    bound fell below ``floor``.
    """
    d = means.shape[1]
    d_out = d - d_in
    low = np.zeros(idx.shape[0], dtype=np.bool_)
    soi = np.empty((d_out, d_in))
    inv_oo = np.empty((d_out, d_out))
    for r in range(idx.shape[0]):
        k = idx[r]
        Jk = J[r]
        S = covs[k]
        L = L_full[k]
        for o in range(d_out):
            means[k, d_in + o] -= shift[r, o]
        # Soi' = Soi - J Sii
        for a in range(d_out):
            for b in range(d_in):
                v = S[d_in + a, b]
                for c in range(d_in):
                    v -= Jk[a, c] * S[c, b]
                soi[a, b] = v
        # Soo' = Soo - J Soi^T - Soi' J^T
        for a in range(d_out):
            for b in range(a, d_out):
                v = S[d_in + a, d_in + b]
                for c in range(d_in):
                    v -= Jk[a, c] * S[d_in + b, c] + soi[a, c] * Jk[b, c]
                S[d_in + a, d_in + b] = v
                S[d_in + b, d_in + a] = v
        for a in range(d_out):
            for b in range(d_in):
                S[d_in + a, b] = soi[a, b]
                S[b, d_in + a] = soi[a, b]
        # L_oi' = L_oi - J L_ii, G' = G - J
        for a in range(d_out):
            for b in range(d_in):
                v = 0.0
                for c in range(b, d_in):
                    v += Jk[a, c] * L[c, b]
                L[d_in + a, b] -= v
                gain[k, a, b] -= Jk[a, b]
        # floor check
        tr = tr_in[k]
        for c in range(d_out):
            inv_oo[c, c] = 1.0 / L[d_in + c, d_in + c]
            for i in range(c + 1, d_out):
                v = 0.0
                for j in range(c, i):
                    v -= L[d_in + i, d_in + j] * inv_oo[j, c]
                inv_oo[i, c] = v / L[d_in + i, d_in + i]
            for i in range(c, d_out):
                tr += inv_oo[i, c] * inv_oo[i, c]
        for b in range(d_in):
            for a in range(d_out):
                v = 0.0
                for j in range(a + 1):
                    v += inv_oo[a, j] * gain[k, j, b]
                tr += v * v
        if 1.0 / tr < floor:
            low[r] = True
    return low


class MixtureModel:
    """Incremental GMM (component creation, posterior-weighted updates, pruning).

    ``sp`` is the posterior mass a component has absorbed since creation; the
    creating sample counts as one extra unit, so the effective sample count
    of component j is ``1 + sp_j`` and priors are proportional to it.

    Parameters
    ----------
    d_in, d_out : input and output dimensionality.
    sigma_ini : covariance given to freshly created components.
    novelty : create a component when, for every existing one, the chi-square
        tail probability of the sample's Mahalanobis distance is below this.
    sp_min, age_min : prune components older than ``age_min`` updates whose
        accumulated mass is below ``sp_min``.
    reg : diagonal blended into every covariance update; covariances never
        shrink below it.  Defaults to ``EIG_FLOOR``.

    Cholesky factors of every component (full and input block) and the
    regression gains are cached and refreshed only for components that
    changed.  Components whose posterior for a sample is below
    ``MIN_POSTERIOR`` accumulate that mass but keep their mean and covariance.
    """

    MIN_POSTERIOR = 1e-12
    # components whose log weight trails the best by more than this are treated as zero
    LOG_WEIGHT_CUT = 50.0
    _CACHE = ("_L_full", "_ok_full", "_L_in", "_ok_in", "_gain", "_logdet_full", "_logdet_in",
              "_tr_in", "_stale")

    def __init__(self, d_in: int, d_out: int, sigma_ini, novelty: float = 0.01,
                 sp_min: float = 0.1, age_min: int = 200, reg=None):
        self.d_in = int(d_in)
        self.d_out = int(d_out)
        d = self.d_in + self.d_out
        sigma_ini = np.asarray(sigma_ini, dtype=float)
        if sigma_ini.shape != (d, d):
            raise ContractError(f"sigma_ini must be {d}x{d}")
        self.sigma_ini = floor_covariance(sigma_ini)
        self.novelty = float(novelty)
        self.sp_min = float(sp_min)
        self.age_min = int(age_min)
        if reg is None:
            reg = np.full(d, EIG_FLOOR)
        self.reg = np.maximum(np.broadcast_to(np.asarray(reg, dtype=float), (d,)), EIG_FLOOR)
        self._d2_create = float(chi2.isf(self.novelty, d))
        self.means = np.zeros((0, d))
        self.covs = np.zeros((0, d, d))
        self.sp = np.zeros(0)
        self.age = np.zeros(0, dtype=np.int64)
        self.created = 0
        self._hint = 0
        self._dirty = True

    # -- bookkeeping ---------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.d_in + self.d_out

    def __len__(self) -> int:
        return self.means.shape[0]

    @property
    def priors(self) -> np.ndarray:
        mass = 1.0 + self.sp
        return mass / mass.sum() if mass.size else mass

    @property
    def components(self) -> list[GaussianComponent]:
        return [GaussianComponent(float(p), m.copy(), c.copy(), float(s), int(a))
                for p, m, c, s, a in zip(self.priors, self.means, self.covs, self.sp, self.age)]

    def copy(self) -> "MixtureModel":
        other = MixtureModel.__new__(MixtureModel)
        other.__dict__.update(self.__dict__)
        for name in ("means", "covs", "sp", "age", "sigma_ini", "reg"):
            setattr(other, name, getattr(self, name).copy())
        other._dirty = True
        return other

    def set_components(self, means, covs, sp=None, age=None):
        means = np.asarray(means, dtype=float).reshape(-1, self.dim)
        K = means.shape[0]
        self.means = means.copy()
        self.covs = np.asarray(covs, dtype=float).reshape(K, self.dim, self.dim).copy()
        self.sp = np.zeros(K) if sp is None else np.asarray(sp, dtype=float).copy()
        self.age = np.zeros(K, dtype=np.int64) if age is None else np.asarray(age, dtype=np.int64).copy()
        self._dirty = True

    def _factor(self, idx):
        """Recompute cached factors for the components in ``idx``."""
        _factor_kernel(self.covs, np.asarray(idx, dtype=np.int64), self.d_in, self._L_full, self._ok_full,
                       self._L_in, self._ok_in, self._gain, self._logdet_full, self._logdet_in, self._tr_in)
        bad = ~self._ok_in[idx]
        if np.any(bad):
            log.warning("%d components skipped: singular input covariance", int(bad.sum()))

    def _refresh(self):
        K, d, di = len(self), self.dim, self.d_in
        if self._dirty:
            self._L_full = np.zeros((K, d, d))
            self._ok_full = np.zeros(K, dtype=bool)
            self._L_in = np.zeros((K, di, di))
            self._ok_in = np.zeros(K, dtype=bool)
            self._gain = np.zeros((K, self.d_out, di))
            self._logdet_full = np.zeros(K)
            self._logdet_in = np.zeros(K)
            self._tr_in = np.zeros(K)
            self._stale = np.ones(K, dtype=bool)
            self._dirty = False
        if self._stale.any():
            self._factor(np.flatnonzero(self._stale))
            self._stale[:] = False

    def shear(self, shift, J, idx=None):
        """Shift output means by ``-shift`` and map covariances through
        ``T = [[I, 0], [-J, I]]``, keeping the cached factors in step.

        Components whose covariance might have lost its eigenvalue floor are
        re-floored and refactored from scratch.
        """
        self._refresh()
        idx = np.arange(len(self)) if idx is None else np.asarray(idx, dtype=np.int64)
        if idx.size == 0:
            return
        low = _shear(self.means, self.covs, self._L_full, self._gain, self._tr_in,
                     np.ascontiguousarray(shift, dtype=float), np.ascontiguousarray(J, dtype=float),
                     idx, self.d_in, EIG_FLOOR)
        if np.any(low):
            bad = idx[low]
            self.covs[bad] = floor_covariance(self.covs[bad])
            self._stale[bad] = True

    # -- regression ----------------------------------------------------------

    def _input_log_weights(self, x_in):
        self._refresh()
        logbias = np.log(self.priors) - 0.5 * self._logdet_in
        _, logw = _log_weights(self._L_in, logbias, self._ok_in, self.means, x_in,
                               min(self._hint, len(self) - 1), self.LOG_WEIGHT_CUT, -1.0)
        return logw

    def responsibilities(self, x_in) -> np.ndarray:
        return self.predict(x_in)[1]

    def predict(self, x_in):
        """Conditional mean of the outputs given ``x_in``; also returns the responsibilities."""
        x_in = np.ascontiguousarray(x_in, dtype=float).reshape(-1)
        if x_in.shape[0] != self.d_in:
            raise ContractError(f"input must have length {self.d_in}")
        if len(self) == 0:
            return np.zeros(self.d_out), np.zeros(0)
        logw = self._input_log_weights(x_in)
        if not np.any(np.isfinite(logw)):
            return np.zeros(self.d_out), np.zeros(len(self))
        out, w = _conditional_mean(logw, self.means, self._gain, x_in)
        self._hint = int(np.argmax(w))
        return out, w

    def predict_many(self, X_in) -> np.ndarray:
        X_in = np.asarray(X_in, dtype=float).reshape(-1, self.d_in)
        out = np.zeros((X_in.shape[0], self.d_out))
        if len(self) == 0:
            return out
        self._refresh()
        logprior = np.log(self.priors)
        di = self.d_in
        K = len(self)
        logp = np.full((X_in.shape[0], K), -np.inf)
        cond = np.zeros((X_in.shape[0], K, self.d_out))
        for j in range(K):
            if not self._ok_in[j]:
                continue
            diff = X_in - self.means[j, :di]
            z = np.linalg.solve(self._L_in[j], diff.T)
            logdet = 2.0 * np.log(np.diag(self._L_in[j])).sum()
            logp[:, j] = logprior[j] - 0.5 * (np.einsum("dn,dn->n", z, z) + logdet + di * LOG_2PI)
            cond[:, j, :] = self.means[j, di:] + diff @ self._gain[j].T
        logp -= logp.max(axis=1, keepdims=True)
        w = np.exp(logp)
        w /= w.sum(axis=1, keepdims=True)
        return np.einsum("nk,nko->no", w, cond)

    def log_likelihood(self, X) -> np.ndarray:
        """Per-sample log density of full joint vectors under the mixture."""
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        L, ok = _batched_cholesky(self.covs)
        logprior = np.log(self.priors)
        out = np.full((X.shape[0], len(self)), -np.inf)
        for j in range(len(self)):
            if ok[j]:
                diff = X - self.means[j]
                z = np.linalg.solve(L[j], diff.T)
                logdet = 2.0 * np.log(np.diag(L[j])).sum()
                out[:, j] = logprior[j] - 0.5 * (np.einsum("dn,dn->n", z, z) + logdet + self.dim * LOG_2PI)
        m = out.max(axis=1, keepdims=True)
        return (m + np.log(np.exp(out - m).sum(axis=1, keepdims=True)))[:, 0]

    # -- learning ------------------------------------------------------------

    def _create(self, x):
        self._refresh()
        self.means = np.vstack([self.means, x[None, :]])
        self.covs = np.concatenate([self.covs, self.sigma_ini[None]], axis=0)
        self.sp = np.append(self.sp, 0.0)
        self.age = np.append(self.age, 1)
        for name in self._CACHE:
            arr = getattr(self, name)
            setattr(self, name, np.concatenate([arr, np.zeros((1,) + arr.shape[1:], dtype=arr.dtype)]))
        self._stale[-1] = True
        self.created += 1

    def update(self, x) -> bool:
        """Absorb one joint sample; returns True if a component was created."""
        x = np.ascontiguousarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.dim:
            raise ContractError(f"sample must have length {self.dim}")
        if not np.all(np.isfinite(x)):
            raise ContractError("sample must be finite")
        if len(self) == 0:
            self._dirty = True
            self._refresh()
            self._create(x)
            return True
        self._refresh()
        logbias = np.log(self.priors) - 0.5 * self._logdet_full
        d2, logp = _log_weights(self._L_full, logbias, self._ok_full, self.means, x,
                                min(self._hint, len(self) - 1), self.LOG_WEIGHT_CUT, self._d2_create)
        if d2.min() > self._d2_create:
            self._create(x)
            return True
        post = np.exp(logp - logp.max())
        post /= post.sum()
        self._hint = int(np.argmax(post))
        self.age += 1
        self.sp += post
        hit = np.flatnonzero(post >= self.MIN_POSTERIOR)
        omega = post[hit] / (1.0 + self.sp[hit])
        dh = x[None, :] - self.means[hit]
        self.means[hit] += omega[:, None] * dh
        outer = np.einsum("ki,kj->kij", dh, dh)
        om = omega[:, None, None]
        C = (1.0 - om) * self.covs[hit] + om * ((1.0 - om) * outer + np.diag(self.reg)[None])
        self.covs[hit] = 0.5 * (C + np.swapaxes(C, 1, 2))
        self._stale[hit] = True
        return False

    def prune(self) -> int:
        """Drop stale components; returns how many were removed."""
        stale = (self.age >= self.age_min) & (self.sp < self.sp_min)
        if not np.any(stale):
            return 0
        keep = ~stale
        self.means = self.means[keep]
        self.covs = self.covs[keep]
        self.sp = self.sp[keep]
        self.age = self.age[keep]
        if not self._dirty:
            for name in self._CACHE:
                setattr(self, name, getattr(self, name)[keep])
        return int(stale.sum())

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        d = self.dim
        tril = np.tril_indices(d)
        return {
            "format": "semiparam-mixture",
            "version": 1,
            "d_in": self.d_in,
            "d_out": self.d_out,
            "novelty": self.novelty,
            "sp_min": self.sp_min,
            "age_min": self.age_min,
            "reg": self.reg.tolist(),
            "sigma_ini_lower": self.sigma_ini[tril].tolist(),
            "components": [
                {"prior": float(p), "mean": m.tolist(), "cov_lower": c[tril].tolist(),
                 "sp": float(s), "age": int(a)}
                for p, m, c, s, a in zip(self.priors, self.means, self.covs, self.sp, self.age)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MixtureModel":
        d = doc["d_in"] + doc["d_out"]
        tril = np.tril_indices(d)

        def unpack(lower):
            S = np.zeros((d, d))
            S[tril] = lower
            return S + np.tril(S, -1).T

        model = cls(doc["d_in"], doc["d_out"], unpack(doc["sigma_ini_lower"]), doc["novelty"],
                    doc["sp_min"], doc["age_min"], doc["reg"])
        comps = doc["components"]
        if comps:
            model.set_components([c["mean"] for c in comps],
                                 [unpack(c["cov_lower"]) for c in comps],
                                 [c["sp"] for c in comps], [c["age"] for c in comps])
        return model

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "MixtureModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def gmr_predict(model: MixtureModel, x_in):
    """Conditional output mean and responsibilities (zeros for an empty model)."""
    return model.predict(x_in)


def igmm_update(model: MixtureModel, x) -> MixtureModel:
    new = model.copy()
    new.update(x)
    return new


def prune(model: MixtureModel) -> MixtureModel:
    new = model.copy()
    new.prune()
    return new


def warmup_sigma(samples: np.ndarray, scale: float = 0.1) -> np.ndarray:
    """Initial component covariance: ``scale`` times the per-dimension variance
    of a window of pre-collected joint samples.

    Only the diagonal is kept.  A short window usually traces a curve through
    joint space, so its full covariance is close to singular.
    """
    var = np.var(np.asarray(samples, dtype=float), axis=0, ddof=1)
    return floor_covariance(scale * np.diag(np.atleast_1d(var)))
