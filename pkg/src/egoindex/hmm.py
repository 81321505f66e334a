"""Two-level GMM-HMM: elementary activity models and the flattened decoder."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from .cluster import kmeans
from .errors import DimensionMismatch, EmptyObservations, InsufficientData

LOG_2PI = np.log(2.0 * np.pi)
MIN_VARIANCE = 1e-8


def default_variance_floor(data, ratio=1e-4):
    """``ratio`` times the per-dimension variance of ``data``, never below MIN_VARIANCE."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    return np.maximum(ratio * data.var(axis=0), MIN_VARIANCE)


def _safe_log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


@dataclass(frozen=True, eq=False)
class Gaussian:
    mean: np.ndarray
    variances: np.ndarray


@dataclass(frozen=True, eq=False)
class GMM:
    """Diagonal-covariance Gaussian mixture."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    history: tuple = field(default=(), compare=False)

    @property
    def n_components(self):
        return len(self.weights)

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def components(self):
        return [Gaussian(m, v) for m, v in zip(self.means, self.variances)]

    def component_log_pdf(self, x):
        """(n, K) array of log(w_k) + log N(x | mu_k, diag(var_k))."""
        x = np.atleast_2d(x)
        diff = x[:, None, :] - self.means[None, :, :]
        quad = (diff * diff / self.variances[None, :, :]).sum(-1)
        norm = np.log(self.variances).sum(-1) + self.dim * LOG_2PI
        return _safe_log(self.weights)[None, :] - 0.5 * (quad + norm[None, :])

    def log_pdf(self, x):
        return logsumexp(self.component_log_pdf(x), axis=1)

    def to_dict(self):
        return {"weights": self.weights.tolist(), "means": self.means.tolist(),
                "variances": self.variances.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["weights"], dtype=float), np.array(d["means"], dtype=float),
                   np.array(d["variances"], dtype=float))


def _weighted_moments(x, resp, old, floor):
    """M-step for one mixture given (n, K) responsibilities."""
    nk = resp.sum(axis=0)
    total = nk.sum()
    if total <= 0.0:
        return old.weights, old.means, old.variances
    weights = nk / total
    means = old.means.copy()
    variances = old.variances.copy()
    live = nk > 0.0
    means[live] = (resp[:, live].T @ x) / nk[live, None]
    for k in np.flatnonzero(live):
        diff = x - means[k]
        variances[k] = (resp[:, k] @ (diff * diff)) / nk[k]
    variances = np.maximum(variances, floor)
    return weights, means, variances


def gmm_fit(data, n_components=3, seed=0, var_floor=None, max_iter=100, tol=1e-6) -> GMM:
    """EM for a diagonal GMM started from k-means.

    The returned model's ``history`` holds the data log-likelihood before
    each M-step and for the final parameters; it never decreases.
    """
    x = np.atleast_2d(np.asarray(data, dtype=float))
    n, _ = x.shape
    if n < n_components or n_components < 1:
        raise InsufficientData(f"{n} observations for {n_components} components")
    floor = default_variance_floor(x) if var_floor is None else np.broadcast_to(var_floor, x.shape[1])

    centers, labels, _ = kmeans(x, n_components, np.random.default_rng(seed))
    global_var = x.var(axis=0)
    counts = np.bincount(labels, minlength=n_components).astype(float)
    variances = np.empty_like(centers)
    for k in range(n_components):
        members = x[labels == k]
        variances[k] = members.var(axis=0) if len(members) > 1 else global_var
    gmm = GMM(np.maximum(counts, 1.0) / np.maximum(counts, 1.0).sum(), centers,
              np.maximum(variances, floor))

    history = []
    for it in range(max_iter + 1):
        comp = gmm.component_log_pdf(x)
        ll_point = logsumexp(comp, axis=1)
        ll = float(ll_point.sum())
        history.append(ll)
        if it == max_iter or (it > 0 and ll - history[-2] < tol * abs(history[-2])):
            break
        resp = np.exp(comp - ll_point[:, None])
        gmm = GMM(*_weighted_moments(x, resp, gmm, floor))
    return GMM(gmm.weights, gmm.means, gmm.variances, tuple(history))


# --- generic scaled HMM recursions on log-domain inputs -----------------

class ForwardBackward(NamedTuple):
    posteriors: np.ndarray          # (T, S)
    log_likelihood: float           # from the forward pass
    backward_log_likelihood: float  # from an independently scaled backward pass
    xi_sum: np.ndarray              # (S, S) expected transition counts


def forward_backward_log(log_pi, log_A, log_B) -> ForwardBackward:
    """Log-domain forward-backward, each step normalised by its own log-sum."""
    log_B = np.atleast_2d(log_B)
    T, S = log_B.shape
    la = np.empty((T, S))
    lc = np.empty(T)
    a = log_pi + log_B[0]
    lc[0] = logsumexp(a)
    la[0] = a - lc[0]
    for t in range(1, T):
        a = logsumexp(la[t - 1][:, None] + log_A, axis=0) + log_B[t]
        lc[t] = logsumexp(a)
        la[t] = a - lc[t]
    ll_f = float(lc.sum())

    lb = np.zeros((T, S))
    xi_sum = np.zeros((S, S))
    for t in range(T - 2, -1, -1):
        nxt = log_B[t + 1] + lb[t + 1]
        lb[t] = logsumexp(log_A + nxt[None, :], axis=1) - lc[t + 1]
        xi_sum += np.exp(la[t][:, None] + log_A + nxt[None, :] - lc[t + 1])
    lg = la + lb
    gamma = np.exp(lg - logsumexp(lg, axis=1, keepdims=True))

    # backward pass with its own normalisers
    b = np.zeros(S)
    log_d = 0.0
    for t in range(T - 2, -1, -1):
        b = logsumexp(log_A + (log_B[t + 1] + b)[None, :], axis=1)
        d = logsumexp(b)
        log_d += d
        b = b - d
    ll_b = float(logsumexp(log_pi + log_B[0] + b) + log_d)
    return ForwardBackward(gamma, ll_f, ll_b, xi_sum)


def viterbi_log(log_pi, log_A, log_B):
    """Most probable state path; ties resolve to the lower state index."""
    log_B = np.atleast_2d(log_B)
    T, S = log_B.shape
    delta = log_pi + log_B[0]
    back = np.zeros((T, S), dtype=int)
    for t in range(1, T):
        scores = delta[:, None] + log_A
        back[t] = scores.argmax(axis=0)
        delta = scores[back[t], np.arange(S)] + log_B[t]
    path = np.empty(T, dtype=int)
    path[-1] = int(delta.argmax())
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, float(delta.max())


# --- elementary activity HMMs ------------------------------------------

@dataclass(frozen=True, eq=False)
class ElementaryHMM:
    A: np.ndarray
    pi: np.ndarray
    emissions: tuple
    history: tuple = field(default=(), compare=False)

    @property
    def m(self):
        return len(self.pi)

    @property
    def dim(self):
        return self.emissions[0].dim

    def log_emissions(self, obs):
        obs = np.atleast_2d(obs)
        return np.column_stack([g.log_pdf(obs) for g in self.emissions])

    def to_dict(self):
        return {"A": self.A.tolist(), "pi": self.pi.tolist(),
                "emissions": [g.to_dict() for g in self.emissions]}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["A"], dtype=float), np.array(d["pi"], dtype=float),
                   tuple(GMM.from_dict(g) for g in d["emissions"]))


def initial_transitions(m, loop_init=0.9):
    if m == 1:
        return np.ones((1, 1))
    A = np.full((m, m), (1.0 - loop_init) / (m - 1))
    np.fill_diagonal(A, loop_init)
    return A


def baum_welch(sequences, m=3, n_components=3, loop_init=0.9, seed=0, var_floor=None,
               max_iter=100, tol=1e-5) -> ElementaryHMM:
    """Train one activity's GMM-HMM on its observation sequences.

    Emissions start from an even split in time of the concatenated
    observations; EM stops after ``max_iter`` iterations or when the
    relative log-likelihood gain drops under ``tol``.
    """
    seqs = [np.atleast_2d(np.asarray(s, dtype=float)) for s in sequences]
    seqs = [s for s in seqs if len(s)]
    if not seqs:
        raise InsufficientData("no training sequences")
    pooled = np.concatenate(seqs)
    if len(pooled) < m * n_components:
        raise InsufficientData(f"{len(pooled)} observations for m={m}, K={n_components}")
    floor = default_variance_floor(pooled) if var_floor is None else var_floor

    if m == 1:
        g = gmm_fit(pooled, n_components, seed=seed, var_floor=floor)
        return ElementaryHMM(np.ones((1, 1)), np.ones(1), (g,), g.history)

    chunks = np.array_split(pooled, m)
    hmm = ElementaryHMM(initial_transitions(m, loop_init), np.full(m, 1.0 / m),
                        tuple(gmm_fit(c, n_components, seed=seed + j, var_floor=floor)
                              for j, c in enumerate(chunks)))
    history = []
    for it in range(max_iter + 1):
        log_A, log_pi = _safe_log(hmm.A), _safe_log(hmm.pi)
        ll = 0.0
        gamma0 = np.zeros(m)
        xi = np.zeros((m, m))
        resp = [[] for _ in range(m)]
        for s in seqs:
            comp = [g.component_log_pdf(s) for g in hmm.emissions]
            log_B = np.column_stack([logsumexp(c, axis=1) for c in comp])
            fb = forward_backward_log(log_pi, log_A, log_B)
            ll += fb.log_likelihood
            gamma0 += fb.posteriors[0]
            xi += fb.xi_sum
            for j in range(m):
                within = np.exp(comp[j] - log_B[:, j:j + 1])
                resp[j].append(fb.posteriors[:, j:j + 1] * within)
        history.append(ll)
        if it == max_iter or (it > 0 and ll - history[-2] < tol * abs(history[-2])):
            break

        pi = gamma0 / gamma0.sum()
        A = hmm.A.copy()
        rows = xi.sum(axis=1)
        used = rows > 0
        A[used] = xi[used] / rows[used, None]
        emissions = tuple(GMM(*_weighted_moments(pooled, np.concatenate(resp[j]), g, floor))
                          for j, g in enumerate(hmm.emissions))
        hmm = ElementaryHMM(A, pi, emissions)
    return ElementaryHMM(hmm.A, hmm.pi, hmm.emissions, tuple(history))


# --- activity level -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class ActivityModel:
    label: str
    hmm: ElementaryHMM


@dataclass(frozen=True, eq=False)
class ActivityTransitionMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.matrix, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("activity transition matrix must be square")
        if np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("activity transition matrix rows must be probability vectors")
        object.__setattr__(self, "matrix", P)

    @classmethod
    def uniform(cls, n):
        return cls(np.full((n, n), 1.0 / n))

    @property
    def n_activities(self):
        return len(self.matrix)

    @property
    def initial(self):
        return np.full(self.n_activities, 1.0 / self.n_activities)


@dataclass(frozen=True, eq=False)
class CompositeHMM:
    A: np.ndarray
    pi: np.ndarray
    state_map: tuple        # composite state -> (activity index, elementary state)
    activities: tuple       # of ActivityModel

    @property
    def n_states(self):
        return len(self.pi)

    @property
    def labels(self):
        return [a.label for a in self.activities]

    def log_emissions(self, obs):
        return np.column_stack([a.hmm.log_emissions(obs) for a in self.activities])


def flatten(activities: Sequence[ActivityModel], act_matrix: ActivityTransitionMatrix,
            stay=0.95) -> CompositeHMM:
    """Compose elementary HMMs under the fixed activity transition matrix.

    From any state of activity a: ``stay * A_a`` inside the activity and
    ``(1 - stay) * P[a, b] * pi_b`` into each state of activity b != a,
    after which the row is renormalised (P's diagonal is absorbed by stay).
    """
    if not 0.0 < stay < 1.0:
        raise ValueError("stay must lie in (0, 1)")
    n = len(activities)
    if act_matrix.n_activities != n:
        raise DimensionMismatch("activity matrix size differs from the number of activities")
    dims = {a.hmm.dim for a in activities}
    if len(dims) != 1:
        raise DimensionMismatch(f"elementary HMMs disagree on observation dimension: {dims}")
    sizes = [a.hmm.m for a in activities]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    S = int(offsets[-1])
    P = act_matrix.matrix
    A = np.zeros((S, S))
    pi = np.zeros(S)
    state_map = []
    for a, act in enumerate(activities):
        lo, hi = offsets[a], offsets[a + 1]
        pi[lo:hi] = act.hmm.pi / n
        A[lo:hi, lo:hi] = stay * act.hmm.A
        for b, other in enumerate(activities):
            if b != a:
                A[lo:hi, offsets[b]:offsets[b + 1]] = (1.0 - stay) * P[a, b] * other.hmm.pi[None, :]
        state_map.extend((a, j) for j in range(act.hmm.m))
    A /= A.sum(axis=1, keepdims=True)
    return CompositeHMM(A, pi, tuple(state_map), tuple(activities))


@dataclass(frozen=True)
class DecodedTimeline:
    labels: tuple
    activity_indices: tuple
    states: tuple
    log_odds: tuple = None

    def __len__(self):
        return len(self.labels)


def _obs_matrix(observations, dim):
    if len(observations) == 0:
        raise EmptyObservations("no observations to decode")
    rows = [getattr(o, "values", o) for o in observations]
    x = np.atleast_2d(np.asarray(rows, dtype=float))
    if x.shape[1] != dim:
        raise DimensionMismatch(f"observation dim {x.shape[1]} != model dim {dim}")
    return x


def forward_backward(composite: CompositeHMM, observations) -> ForwardBackward:
    x = _obs_matrix(observations, composite.activities[0].hmm.dim)
    return forward_backward_log(_safe_log(composite.pi), _safe_log(composite.A),
                                composite.log_emissions(x))


def viterbi(composite: CompositeHMM, observations, with_log_odds=False) -> DecodedTimeline:
    """MAP composite path mapped to per-segment activity labels.

    With ``with_log_odds`` the posterior log-odds of each decoded activity
    is attached.
    """
    x = _obs_matrix(observations, composite.activities[0].hmm.dim)
    log_B = composite.log_emissions(x)
    path, _ = viterbi_log(_safe_log(composite.pi), _safe_log(composite.A), log_B)
    acts = [composite.state_map[s][0] for s in path]
    log_odds = None
    if with_log_odds:
        post = forward_backward_log(_safe_log(composite.pi), _safe_log(composite.A), log_B).posteriors
        owner = np.array([a for a, _ in composite.state_map])
        odds = []
        for t, a in enumerate(acts):
            p = float(np.clip(post[t, owner == a].sum(), 1e-300, 1.0 - 1e-16))
            odds.append(float(np.log(p) - np.log1p(-p)))
        log_odds = tuple(odds)
    return DecodedTimeline(tuple(composite.activities[a].label for a in acts), tuple(acts),
                           tuple(int(s) for s in path), log_odds)
