"""Plain-text result tables and estimated-vs-true component matching."""

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .files import fmt

MAX_MATCH_K = 6


def canonical_order(theta):
    """Component order by mean x, then mean y."""
    means = theta.means
    return list(np.lexsort(means.T[::-1]))


@dataclass
class ResultReport:
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    passes: int
    final_loglik: float
    stop_reason: str

    @classmethod
    def from_trace(cls, trace):
        theta = trace.final.params
        order = canonical_order(theta)
        return cls(theta.weights[order], theta.means[order], theta.covs[order],
                   trace.n_passes, trace.final.loglik, trace.stop_reason)

    def to_text(self):
        k = len(self.weights)
        lines = [
            f"EM results for K_hat = {k} components",
            f"passes: {self.passes}",
            f"stop reason: {self.stop_reason}",
            f"final log-likelihood: {fmt(self.final_loglik)}",
            "",
            "weights: [" + ", ".join(fmt(w) for w in self.weights) + "]",
            "",
        ]
        for i in range(k):
            lines.append(f"component {i + 1}")
            lines.append("  mean: [" + ", ".join(fmt(v) for v in self.means[i]) + "]")
            lines.append("  cov:")
            for row in self.covs[i]:
                lines.append("    [" + ", ".join(fmt(v) for v in row) + "]")
        return "\n".join(lines) + "\n"


def match_components(est_means, true_means):
    """Pairs ``(est, true)`` minimising the summed mean distance.

    Exhaustive over assignments; the smaller set is matched in full and the
    leftovers of the larger set are returned separately.
    """
    est_means = np.asarray(est_means, dtype=float)
    true_means = np.asarray(true_means, dtype=float)
    n_est, n_true = len(est_means), len(true_means)
    if max(n_est, n_true) > MAX_MATCH_K:
        raise InvalidArgument(f"matching supports at most {MAX_MATCH_K} components")
    dist = np.linalg.norm(est_means[:, None, :] - true_means[None, :, :], axis=2)
    best, best_cost = None, np.inf
    if n_est <= n_true:
        for perm in itertools.permutations(range(n_true), n_est):
            cost = sum(dist[i, j] for i, j in enumerate(perm))
            if cost < best_cost:
                best, best_cost = list(enumerate(perm)), cost
    else:
        for perm in itertools.permutations(range(n_est), n_true):
            cost = sum(dist[i, j] for j, i in enumerate(perm))
            if cost < best_cost:
                best, best_cost = [(i, j) for j, i in enumerate(perm)], cost
    best.sort(key=lambda pair: pair[1])
    unmatched_est = sorted(set(range(n_est)) - {i for i, _ in best})
    unmatched_true = sorted(set(range(n_true)) - {j for _, j in best})
    return best, unmatched_est, unmatched_true


def comparison_text(estimated, truth):
    """Estimated minus true parameters for every matched component."""
    pairs, extra_est, extra_true = match_components(estimated.means, truth.means)
    lines = [f"estimated components: {estimated.k}", f"true components: {truth.k}", ""]
    for i, j in pairs:
        e, t = estimated.components[i], truth.components[j]
        lines.append(f"true component {j + 1} <- estimated component {i + 1}")
        lines.append(f"  weight: {fmt(estimated.weights[i])} (true {fmt(truth.weights[j])}, "
                     f"delta {fmt(estimated.weights[i] - truth.weights[j])})")
        lines.append("  mean delta: [" + ", ".join(fmt(v) for v in e.mean - t.mean) + "]")
        lines.append("  cov delta:")
        for row in e.cov - t.cov:
            lines.append("    [" + ", ".join(fmt(v) for v in row) + "]")
    for i in extra_est:
        lines.append(f"unmatched estimated component {i + 1}: weight {fmt(estimated.weights[i])}, "
                     "mean [" + ", ".join(fmt(v) for v in estimated.components[i].mean) + "]")
    for j in extra_true:
        lines.append(f"unmatched true component {j + 1}: weight {fmt(truth.weights[j])}, "
                     "mean [" + ", ".join(fmt(v) for v in truth.components[j].mean) + "]")
    return "\n".join(lines) + "\n"
