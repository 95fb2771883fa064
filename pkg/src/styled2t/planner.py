"""GRU-based ordering of attribute-value pairs.

Training scores the ground-truth plan with teacher forcing: each step's
softmax runs over all K candidates with no visited-mask, so repeats are
merely improbable, not impossible.  Inference decodes greedily with
visited candidates masked out, which always yields a full permutation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from . import tensor as T
from .corpus import Plan
from .errors import EmptyPlan, ShapeMismatch


@dataclass
class PlannerParams:
    gru: nn.GruParams
    q0: T.Tensor   # (1, d1) learnable query for the first step
    W_L: T.Tensor  # (d1, d1) bilinear score map

    @classmethod
    def init(cls, rng, d1):
        return cls(
            gru=nn.GruParams.init(rng, d1),
            q0=T.parameter(rng.normal(0.0, 0.02, (1, d1))),
            W_L=nn.linear_init(rng, d1, d1),
        )

    @property
    def dim(self) -> int:
        return self.q0.data.shape[1]

    def named(self, prefix="planner"):
        yield from self.gru.named(f"{prefix}.gru")
        yield f"{prefix}.q0", self.q0
        yield f"{prefix}.W_L", self.W_L


def _check_refined(refined, params):
    if refined.data.ndim != 2:
        raise ShapeMismatch(f"refined embeddings must be 2-D, got {refined.data.shape}")
    if refined.data.shape[1] != params.dim:
        raise ShapeMismatch(f"refined width {refined.data.shape[1]} != planner dim {params.dim}")


def plan_log_prob(refined, gt_plan: Plan, params: PlannerParams):
    """Log-probability of the ground-truth plan under teacher forcing.

    The GRU starts from the mean refined embedding; step t consumes the
    refined embedding of the previously mentioned pair (a learned query at
    t=1) and scores every candidate i as o_t . W_L . a_i, normalized by a
    softmax over all K pairs.
    """
    refined = T.as_tensor(refined)
    _check_refined(refined, params)
    if len(gt_plan) == 0:
        raise EmptyPlan("ground-truth plan has no steps")
    k = refined.data.shape[0]
    if any(not (1 <= m <= k) for m in gt_plan.order):
        raise ShapeMismatch(f"plan indices {gt_plan.order} out of range for K={k}")
    h = T.tmean(refined, axis=0, keepdims=True)
    q = params.q0
    candidates_t = T.transpose(refined)  # (d1, K)
    total = None
    for m in gt_plan.order:
        h = nn.gru_step(q, h, params.gru)
        logits = T.matmul(T.matmul(h, params.W_L), candidates_t)  # (1, K)
        logp = T.log_softmax(logits, axis=-1)
        step = T.tslice(logp, (0, m - 1))
        total = step if total is None else T.add(total, step)
        q = T.rows(refined, np.asarray([m - 1], dtype=np.intp))
    return total


def planning_loss(refined, gt_plan: Plan, params: PlannerParams):
    """Negative plan log-likelihood; differentiable in inputs and parameters."""
    return T.mul(plan_log_prob(refined, gt_plan, params), -1.0)


def decode_plan(refined: np.ndarray, params: PlannerParams) -> Plan:
    """Greedy plan: pick the best not-yet-chosen pair at each of K steps.

    Ties go to the smallest pair index; masking visited pairs guarantees a
    permutation.  Runs tape-free on raw arrays.
    """
    refined = np.asarray(refined, dtype=np.float64)
    if refined.ndim != 2 or refined.shape[1] != params.dim:
        raise ShapeMismatch(f"refined shape {refined.shape} vs planner dim {params.dim}")
    k = refined.shape[0]
    h = refined.mean(axis=0, keepdims=True)
    q = params.q0.data
    visited = np.zeros(k, dtype=bool)
    order = []
    for _ in range(k):
        h = nn.gru_step_raw(q, h, params.gru)
        scores = (h @ params.W_L.data) @ refined.T  # (1, K)
        scores = scores[0].copy()
        scores[visited] = -np.inf
        choice = int(np.argmax(scores))
        visited[choice] = True
        order.append(choice + 1)
        q = refined[choice : choice + 1]
    return Plan(tuple(order))
