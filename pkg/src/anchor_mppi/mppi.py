"""One MPPI instance: sampling, rollouts, path-integral weights, update."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from anchor_mppi.config import DynamicsParams, MppiConfig
from anchor_mppi.costs import Rollout
from anchor_mppi.dynamics import CONTROL_DIM, STATE_DIM, Q, _as_state, _derivative, clamp_control, quat_normalize


class NoValidRollout(RuntimeError):
    pass


def noise_stream(seed: int, instance: int = 0, cycle: int = 0, iteration: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, instance, cycle, iteration)``.

    Each key owns an independent Philox stream, so the draws of one instance
    never depend on how many other instances ran or in which order.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, instance, cycle, iteration])))


def sample_perturbations(cfg: MppiConfig, seed: int, instance: int = 0, cycle: int = 0, iteration: int = 0) -> np.ndarray:
    """Zero-mean Gaussian control noise with diagonal std-devs ``cfg.sigma``; ``(K, N, 4)``."""
    rng = noise_stream(seed, instance, cycle, iteration)
    return rng.standard_normal((cfg.K, cfg.N, CONTROL_DIM)) * np.asarray(cfg.sigma)


def rollout(x0, nominal: np.ndarray, delta: np.ndarray, params: DynamicsParams) -> tuple[Rollout, np.ndarray]:
    """Simulate ``clamp(nominal + delta)`` from ``x0``.

    Returns the rollout and the perturbation actually applied after clamping.
    A rollout whose state turns non-finite is returned with ``valid=False``.
    """
    nominal = np.asarray(nominal, float)
    controls = clamp_control(nominal + np.asarray(delta, float), params)
    states = np.empty((len(controls) + 1, STATE_DIM))
    states[0] = _as_state(x0)
    h = params.dt
    valid = True
    with np.errstate(all="ignore"):
        for j, u in enumerate(controls):
            x = states[j]
            k1 = _derivative(x, u, params)
            k2 = _derivative(x + 0.5 * h * k1, u, params)
            k3 = _derivative(x + 0.5 * h * k2, u, params)
            k4 = _derivative(x + h * k3, u, params)
            nxt = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            nxt[Q] = quat_normalize(nxt[Q])
            states[j + 1] = nxt
            if not np.all(np.isfinite(nxt)):
                states[j + 1 :] = np.nan
                valid = False
                break
    return Rollout(states, controls, h, valid=valid), controls - nominal


def compute_weights(costs, lam: float) -> np.ndarray:
    """Softmin weights ``exp(-(S_k - min S) / lam)``, normalised.

    Non-finite costs get zero weight.

    Raises:
        NoValidRollout: when no cost is finite.
    """
    s = np.asarray(costs, float)
    finite = np.isfinite(s)
    if not finite.any():
        raise NoValidRollout("no valid rollout")
    rho = s[finite].min()
    w = np.zeros_like(s)
    w[finite] = np.exp(-(s[finite] - rho) / lam)
    return w / w.sum()


def update_nominal(nominal: np.ndarray, perturbations: np.ndarray, weights: np.ndarray, params: DynamicsParams) -> np.ndarray:
    """``u_nom + sum_k w_k du_k``, clamped. Zero-weight samples are skipped so NaNs cannot leak in."""
    w = np.asarray(weights, float)
    use = w > 0
    step = np.tensordot(w[use], np.asarray(perturbations, float)[use], axes=1)
    return clamp_control(np.asarray(nominal, float) + step, params)


def shift_nominal(nominal: np.ndarray) -> np.ndarray:
    """Drop the first control and repeat the last one."""
    nominal = np.asarray(nominal, float)
    return np.concatenate([nominal[1:], nominal[-1:]], axis=0)


def effective_sample_size(weights: np.ndarray) -> float:
    w = np.asarray(weights, float)
    return float(1.0 / np.sum(w**2))


@dataclass(frozen=True)
class RolloutBatch:
    perturbations: np.ndarray  # (K, N, 4) as applied
    trajectories: list[Rollout]
    costs: np.ndarray  # (K,)
    weights: np.ndarray  # (K,)

    @property
    def diagnostics(self) -> dict[str, float]:
        finite = self.costs[np.isfinite(self.costs)]
        return {
            "min_cost": float(finite.min()),
            "mean_cost": float(finite.mean()),
            "ess": effective_sample_size(self.weights),
        }


def mppi_iteration(
    x0,
    nominal: np.ndarray,
    cost_fn: Callable[[Rollout], float],
    cfg: MppiConfig,
    params: DynamicsParams,
    seed: int,
    instance: int = 0,
    cycle: int = 0,
    iteration: int = 0,
) -> tuple[np.ndarray, RolloutBatch]:
    """Sample ``K`` rollouts around ``nominal``, weight them and return the updated nominal."""
    raw = sample_perturbations(cfg, seed, instance, cycle, iteration)
    trajectories, applied, costs = [], np.empty_like(raw), np.empty(cfg.K)
    for k in range(cfg.K):
        r, applied[k] = rollout(x0, nominal, raw[k], params)
        trajectories.append(r)
        costs[k] = cost_fn(r) if r.valid else np.inf
        if not np.isfinite(costs[k]):
            costs[k] = np.inf
    weights = compute_weights(costs, cfg.lam)
    updated = update_nominal(nominal, applied, weights, params)
    return updated, RolloutBatch(applied, trajectories, costs, weights)
