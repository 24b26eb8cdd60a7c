"""
Exact log-space forward-backward and Viterbi over the expanded substate chain.

Every substate has at most two kinds of predecessor (its own countdown and the
fan-in from the previous state's d=0 substate), so one step costs O(J * d_max)
array operations. Series are processed in padded batches; positions past a
series' end are masked out.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from ..utils.parallel import DEFAULT_CHUNK_SIZE, chunk_ranges, ordered_map
from .dataset import IndividualSeries
from .model import CyhmmModel, emission_logprob_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PosteriorSummary:
    state_marginals: np.ndarray  # T x J
    entry_counts: np.ndarray  # J x (d_max + 1)
    loglik: float


@dataclass(frozen=True)
class ViterbiPath:
    path: Tuple[Tuple[int, int], ...]
    logprob: float

    @property
    def states(self) -> np.ndarray:
        return np.array([j for j, _ in self.path], dtype=int)


def _countdown(a: np.ndarray) -> np.ndarray:
    """value at (j, d) <- a at (j, d + 1); nothing counts down into d_max"""
    out = np.full_like(a, -np.inf)
    out[..., :-1] = a[..., 1:]
    return out


def _fan_in(a: np.ndarray, log_pmf: np.ndarray) -> np.ndarray:
    """value at (j, d) <- a at (j - 1, 0) + log f_j(d)"""
    return np.roll(a[..., 0], 1, axis=-1)[..., None] + log_pmf


def _padded_emissions(model: CyhmmModel, batch: Sequence[IndividualSeries]) -> Tuple[np.ndarray, np.ndarray]:
    lengths = np.array([s.T for s in batch], dtype=int)
    log_e = np.zeros((len(batch), lengths.max(), model.J))
    for b, s in enumerate(batch):
        log_e[b, :s.T] = emission_logprob_matrix(model, s)
    return log_e, lengths


def _forward(model: CyhmmModel, log_e: np.ndarray) -> np.ndarray:
    log_pmf = model.durations.log_pmf_matrix
    B, T, J = log_e.shape
    alpha = np.empty((B, T, J, model.d_max + 1))
    alpha[:, 0] = model.initial_log_distribution()[None] + log_e[:, 0, :, None]
    for t in range(1, T):
        prev = alpha[:, t - 1]
        alpha[:, t] = np.logaddexp(_countdown(prev), _fan_in(prev, log_pmf)) + log_e[:, t, :, None]
    return alpha


def _final_loglik(alpha: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    last = alpha[np.arange(len(lengths)), lengths - 1]
    return logsumexp(last.reshape(len(lengths), -1), axis=1)


def _backward(model: CyhmmModel, log_e: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    log_pmf = model.durations.log_pmf_matrix
    B, T, J = log_e.shape
    beta = np.zeros((B, T, J, model.d_max + 1))
    for t in range(T - 2, -1, -1):
        nxt = beta[:, t + 1] + log_e[:, t + 1, :, None]
        step = np.empty_like(nxt)
        step[..., 1:] = nxt[..., :-1]
        step[..., 0] = np.roll(logsumexp(log_pmf[None] + nxt, axis=-1), -1, axis=-1)
        ended = (t >= lengths - 1)[:, None, None]
        beta[:, t] = np.where(ended, 0.0, step)
    return beta


def _posterior_chunk(model: CyhmmModel, batch: Sequence[IndividualSeries]) -> List[PosteriorSummary]:
    log_e, lengths = _padded_emissions(model, batch)
    alpha = _forward(model, log_e)
    beta = _backward(model, log_e, lengths)
    ll = _final_loglik(alpha, lengths)
    B, T, J = log_e.shape
    valid = np.arange(T)[None, :] < lengths[:, None]

    log_gamma = alpha + beta - ll[:, None, None, None]
    marginals = np.exp(logsumexp(log_gamma, axis=-1))

    entries = np.exp(log_gamma[:, 0])
    if T > 1:
        log_pmf = model.durations.log_pmf_matrix
        log_xi = (np.roll(alpha[:, :-1, :, 0], 1, axis=-1)[..., None] + log_pmf[None, None]
                  + log_e[:, 1:, :, None] + beta[:, 1:] - ll[:, None, None, None])
        xi = np.where(valid[:, 1:, None, None], np.exp(log_xi), 0.0)
        entries = entries + xi.sum(axis=1)

    return [
        PosteriorSummary(marginals[b, :lengths[b]], entries[b], float(ll[b]))
        for b in range(B)
    ]


def posterior_batch(model: CyhmmModel, series: Sequence[IndividualSeries],
                    chunk_size: int = DEFAULT_CHUNK_SIZE, n_workers: Optional[int] = None) -> List[PosteriorSummary]:
    """Forward-backward for many series; chunks are spread over a thread pool"""
    chunks = [[series[i] for i in r] for r in chunk_ranges(len(series), chunk_size)]
    results = ordered_map(lambda batch: _posterior_chunk(model, batch), chunks, n_workers)
    return [summary for chunk in results for summary in chunk]


def forward_backward(model: CyhmmModel, series: IndividualSeries) -> PosteriorSummary:
    """Exact state marginals, expected substate entries and loglik of one series"""
    return _posterior_chunk(model, [series])[0]


def loglik_batch(model: CyhmmModel, series: Sequence[IndividualSeries],
                 chunk_size: int = DEFAULT_CHUNK_SIZE, n_workers: Optional[int] = None) -> np.ndarray:
    def run(batch):
        log_e, lengths = _padded_emissions(model, batch)
        return _final_loglik(_forward(model, log_e), lengths)

    chunks = [[series[i] for i in r] for r in chunk_ranges(len(series), chunk_size)]
    parts = ordered_map(run, chunks, n_workers)
    return np.concatenate(parts) if parts else np.zeros(0)


def loglik(model: CyhmmModel, series: IndividualSeries) -> float:
    """log P(series | model), forward pass only"""
    return float(loglik_batch(model, [series])[0])


def viterbi(model: CyhmmModel, series: IndividualSeries) -> ViterbiPath:
    """Most probable substate path.

    Ties go to the predecessor with the lower state index, then the lower d;
    the final substate is the first maximum in (j, d) order.
    """
    log_e = emission_logprob_matrix(model, series)
    log_pmf = model.durations.log_pmf_matrix
    J, D = model.J, model.d_max + 1
    T = series.T
    prefer_fan_in = np.zeros((J, 1), dtype=bool)
    prefer_fan_in[1:] = True
    if J == 1:
        prefer_fan_in[:] = True

    delta = np.empty((T, J, D))
    fan_in = np.zeros((T, J, D), dtype=bool)
    delta[0] = model.initial_log_distribution() + log_e[0][:, None]
    for t in range(1, T):
        stay = _countdown(delta[t - 1])
        enter = _fan_in(delta[t - 1], log_pmf)
        chose = (enter > stay) | ((enter == stay) & prefer_fan_in & np.isfinite(enter))
        fan_in[t] = chose
        delta[t] = np.where(chose, enter, stay) + log_e[t][:, None]

    j, d = np.unravel_index(int(np.argmax(delta[T - 1])), (J, D))
    logprob = float(delta[T - 1, j, d])
    path = [(int(j), int(d))]
    for t in range(T - 1, 0, -1):
        if fan_in[t, j, d]:
            j, d = (j - 1) % J, 0
        else:
            d = d + 1
        path.append((int(j), int(d)))
    path.reverse()
    return ViterbiPath(tuple(path), logprob)
