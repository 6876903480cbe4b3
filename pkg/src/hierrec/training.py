"""Episode rollouts, returns, the three losses, and the optimization loop.

The engine runs a batch of sessions in lockstep. A live pass interacts with
simulator sessions and (optionally) records a tape of forward caches; a
forced pass replays a recorded batch against the current parameters, which
is what the finite-difference gradient check differentiates. The backward
pass consumes the tape and accumulates parameter gradients.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .curriculum import CurriculumMap, LearningTarget, questions_for_concepts
from .encoder import HIGH, LOW
from .errors import ConfigError, DivergenceDetected
from .model import HierModel, save_model
from .nn import Adam, clip_global_norm, log_softmax, sigmoid, softmax, zero_grads
from .policy import ActionDistribution, GREEDY, PolicyDecision, SAMPLE, greedy_top_k, sample_without_replacement
from .rng import substream
from .scenario import Scenario

LEARNING_RATE_GRID = (1e-3, 5e-4, 1e-4)
REWARD_MODES = ("telescoping", "terminal_only")
METRICS_HEADER = ["episode", "delta_u", "loss_h", "loss_l", "loss_p", "loss_total"]


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 1.0
    alpha: float = 1.0
    learning_rate: float = 1e-3
    episodes: int = 30000
    batch_size: int = 16
    seed: int = 0
    reward_mode: str = "telescoping"
    baseline: bool = False
    grad_clip: float = 5.0
    warmup_min: int = 0
    warmup_max: int = 20
    checkpoint_every: int = 5000  # episodes; 0 disables periodic checkpoints

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must be in [0, 1]")
        if self.alpha < 0.0:
            raise ConfigError("alpha must be >= 0")
        if self.learning_rate not in LEARNING_RATE_GRID:
            raise ConfigError(f"learning rate must come from the grid {LEARNING_RATE_GRID}")
        if self.reward_mode not in REWARD_MODES:
            raise ConfigError(f"reward_mode must be one of {REWARD_MODES}")
        if not 0 <= self.warmup_min <= self.warmup_max:
            raise ConfigError("require 0 <= warmup_min <= warmup_max")


# ---------------------------------------------------------------------------
# returns and losses


def returns(rewards, gamma: float) -> np.ndarray:
    """Discounted reward-to-go: r_hat[t] = r[t] + gamma * r_hat[t+1]."""
    rewards = np.asarray(rewards, dtype=np.float64)
    out = np.zeros_like(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def bce(y_true: np.ndarray, y_pred: np.ndarray) -> np.ndarray:
    """Per-element binary cross-entropy with the predictions clamped away from {0,1}."""
    p = np.clip(np.asarray(y_pred, dtype=np.float64), 1e-7, 1.0 - 1e-7)
    y = np.asarray(y_true, dtype=np.float64)
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


@dataclass
class StepRecord:
    high_state: np.ndarray | None
    low_state: np.ndarray | None
    concept_decision: PolicyDecision | None
    question_decision: PolicyDecision
    reward: float
    correct: int
    predicted: float


@dataclass
class Trajectory:
    steps: list[StepRecord]
    e_before: int
    e_max: int
    e_after: int
    delta_u: float

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([s.reward for s in self.steps], dtype=np.float64)

    @property
    def log_probs_high(self) -> np.ndarray:
        return np.array(
            [s.concept_decision.log_prob if s.concept_decision else 0.0 for s in self.steps]
        )

    @property
    def log_probs_low(self) -> np.ndarray:
        return np.array([s.question_decision.log_prob for s in self.steps])


def loss_high(traj: Trajectory, gamma: float = 1.0) -> float:
    r_hat = returns(traj.rewards, gamma)
    return float(-(r_hat * traj.log_probs_high).sum())


def loss_low(traj: Trajectory, gamma: float = 1.0) -> float:
    r_hat = returns(traj.rewards, gamma)
    return float(-(r_hat * traj.log_probs_low).sum())


def loss_aux(traj: Trajectory) -> float:
    ys = np.array([s.correct for s in traj.steps], dtype=np.float64)
    preds = np.array([s.predicted for s in traj.steps], dtype=np.float64)
    return float(bce(ys, preds).sum())


def loss_total(l_high: float, l_low: float, l_aux: float, alpha: float) -> float:
    return l_high + l_low + alpha * l_aux


# ---------------------------------------------------------------------------
# batched episode engine


@dataclass
class EpisodeRecord:
    """Everything needed to replay one episode's losses against any parameters."""

    targets: LearningTarget
    warmup_q: np.ndarray
    warmup_y: np.ndarray
    concepts: np.ndarray | None  # (T, k) or None when the hierarchy is disabled
    candidates: list[np.ndarray]  # per step, sorted low-level support
    questions: np.ndarray  # (T,)
    answers: np.ndarray  # (T,)
    rewards: np.ndarray  # (T,)
    logp_c: np.ndarray
    logp_q: np.ndarray
    yhat: np.ndarray
    e_before: int
    e_max: int
    e_after: int
    delta_u: float

    def losses(self, gamma: float, alpha: float, baseline_mean: float = 0.0):
        r_hat = returns(self.rewards, gamma) - baseline_mean
        l_h = float(-(r_hat * self.logp_c).sum())
        l_l = float(-(r_hat * self.logp_q).sum())
        l_p = float(bce(self.answers, self.yhat).sum())
        return l_h, l_l, l_p, loss_total(l_h, l_l, l_p, alpha)


@dataclass
class _StepTape:
    aux_cache: object
    yhat: np.ndarray
    fuse_high: object = None
    high_pointer: object = None
    probs_high: np.ndarray | None = None
    chosen_concepts: np.ndarray | None = None
    flat_fuse: object = None
    flat_pointer: object = None
    flat_probs: np.ndarray | None = None
    multi_rows: list[int] = field(default_factory=list)
    eq_caches: list = field(default_factory=list)
    low_fuse: object = None
    low_stack_cache: object = None
    low_u: np.ndarray | None = None
    low_probs: list = field(default_factory=list)
    low_chosen_pos: list = field(default_factory=list)


@dataclass
class BatchTape:
    warmup_len: int
    steps: int
    batch: int
    k: int
    disable_high: bool
    lstm_caches: list
    g_caches: list
    ec_cache: object
    eqfull_cache: object
    step_tapes: list


def run_batch(
    model: HierModel,
    cmap: CurriculumMap,
    steps: int,
    *,
    sessions=None,
    forced: list[EpisodeRecord] | None = None,
    mode: str = SAMPLE,
    k: int = 1,
    disable_high: bool = False,
    reward_mode: str = "telescoping",
    rng: np.random.Generator | None = None,
    with_tape: bool = False,
    record_distributions: bool = False,
):
    """Run a lockstep batch of episodes; returns (records, tape, extras).

    Live mode drives simulator sessions; forced mode replays recorded
    episodes (same actions, answers and rewards) against current parameters.
    `extras` carries per-step distribution objects when requested.
    """
    from .evaluation import learning_effect

    enc, pol = model.encoder, model.policy
    live = forced is None
    if live:
        if not sessions:
            raise ConfigError("live run_batch needs sessions")
        batch = len(sessions)
        targets_list = [s.targets for s in sessions]
        warm_q = [np.array([r.question for r in s.history], dtype=np.intp) for s in sessions]
        warm_y = [np.array([r.correct for r in s.history], dtype=np.float64) for s in sessions]
        e_before = np.array([s.e_before for s in sessions], dtype=np.int64)
    else:
        batch = len(forced)
        targets_list = [r.targets for r in forced]
        warm_q = [r.warmup_q for r in forced]
        warm_y = [np.asarray(r.warmup_y, dtype=np.float64) for r in forced]
        e_before = np.array([r.e_before for r in forced], dtype=np.int64)
    wlens = {len(q) for q in warm_q}
    if len(wlens) > 1:
        raise ConfigError("lockstep batch requires one warmup length")
    w = wlens.pop() if wlens else 0
    e_max = np.array([len(t) for t in targets_list], dtype=np.int64)

    # per-episode constants
    g_vecs = np.empty((batch, 2 * enc.config.d_a))
    g_caches = []
    for b in range(batch):
        g_vecs[b], cache = enc.encode_target(targets_list[b])
        g_caches.append(cache)
    e_c = ec_cache = e_qfull = eqfull_cache = None
    if disable_high:
        e_qfull, eqfull_cache = enc.encode_questions(np.arange(cmap.n))
    else:
        e_c, ec_cache = enc.encode_concepts(np.arange(cmap.m))
    all_concepts = np.arange(cmap.m)
    all_questions = np.arange(cmap.n)

    lstm_caches = []
    state = enc.history_start(batch)
    if w:
        wq = np.stack(warm_q)
        wy = np.stack(warm_y)
        for j in range(w):
            state, cache = enc.history_step(state, wq[:, j], wy[:, j])
            if with_tape:
                lstm_caches.append(cache)

    shape_tk = (batch, steps, k)
    concepts_out = None if disable_high else np.zeros(shape_tk, dtype=np.intp)
    questions_out = np.zeros((batch, steps), dtype=np.intp)
    answers_out = np.zeros((batch, steps), dtype=np.int64)
    rewards_out = np.zeros((batch, steps))
    logp_c_out = np.zeros((batch, steps))
    logp_q_out = np.zeros((batch, steps))
    yhat_out = np.zeros((batch, steps))
    candidates_out: list[list[np.ndarray]] = [[] for _ in range(batch)]
    extras = [] if record_distributions else None
    step_tapes = []
    e_prev = e_before.astype(np.float64)

    for t in range(steps):
        h = state.h
        aux_logit, aux_cache = model.aux.forward(h)
        yhat_t = sigmoid(aux_logit[:, 0])
        yhat_out[:, t] = yhat_t
        tape = _StepTape(aux_cache=aux_cache, yhat=yhat_t) if with_tape else None
        extra = {"high": [None] * batch, "low": [None] * batch, "s_h": None, "s_l": [None] * batch} if record_distributions else None

        cand_t: list[np.ndarray] = [None] * batch
        if disable_high:
            for b in range(batch):
                cand_t[b] = all_questions
        else:
            s_h, fuse_h = enc.fuse(HIGH, h, g_vecs, e_c)
            logits_h, high_ptr = pol.high.logits(s_h, all_concepts)
            probs_h = softmax(logits_h, axis=-1)
            logp_h = log_softmax(logits_h, axis=-1)
            chosen_c = np.zeros((batch, k), dtype=np.intp)
            for b in range(batch):
                if forced is not None:
                    rows = list(forced[b].concepts[t])
                elif mode == GREEDY:
                    rows = greedy_top_k(probs_h[b], k)
                else:
                    rows = sample_without_replacement(probs_h[b], k, rng)
                chosen_c[b] = rows
                logp_c_out[b, t] = float(logp_h[b, rows].sum())
                cand_t[b] = np.array(sorted(questions_for_concepts(cmap, rows)), dtype=np.intp)
                if record_distributions:
                    extra["high"][b] = PolicyDecision(
                        level="high",
                        distribution=ActionDistribution(all_concepts.copy(), probs_h[b].copy()),
                        chosen=tuple(int(c) for c in rows),
                        log_prob=float(logp_h[b, rows].sum()),
                    )
            concepts_out[:, t, :] = chosen_c
            if record_distributions:
                extra["s_h"] = s_h.copy()
            if with_tape:
                tape.fuse_high = fuse_h
                tape.high_pointer = high_ptr
                tape.probs_high = probs_h
                tape.chosen_concepts = chosen_c

        q_t = np.zeros(batch, dtype=np.intp)
        if disable_high:
            s_l, fuse_l = enc.fuse(LOW, h, g_vecs, e_qfull)
            logits_l, low_ptr = pol.low.logits(s_l, all_questions)
            probs_l = softmax(logits_l, axis=-1)
            logp_l = log_softmax(logits_l, axis=-1)
            for b in range(batch):
                if forced is not None:
                    pos = int(forced[b].questions[t])
                elif mode == GREEDY:
                    pos = greedy_top_k(probs_l[b], 1)[0]
                else:
                    pos = sample_without_replacement(probs_l[b], 1, rng)[0]
                q_t[b] = pos
                logp_q_out[b, t] = float(logp_l[b, pos])
                if record_distributions:
                    extra["low"][b] = PolicyDecision(
                        level="low",
                        distribution=ActionDistribution(all_questions.copy(), probs_l[b].copy()),
                        chosen=(int(pos),),
                        log_prob=float(logp_l[b, pos]),
                    )
            if record_distributions:
                for b in range(batch):
                    extra["s_l"][b] = s_l[b].copy()
            if with_tape:
                tape.flat_fuse = fuse_l
                tape.flat_pointer = low_ptr
                tape.flat_probs = probs_l
        else:
            multi = [b for b in range(batch) if len(cand_t[b]) > 1 or record_distributions]
            for b in range(batch):
                if len(cand_t[b]) == 1:
                    q_t[b] = cand_t[b][0]
                    logp_q_out[b, t] = 0.0
            if multi:
                eq_caches = []
                e_q_sub = np.empty((len(multi), 2 * enc.config.d_a))
                for i, b in enumerate(multi):
                    e_q_sub[i], cache = enc.encode_questions(cand_t[b])
                    eq_caches.append(cache)
                rows_idx = np.array(multi, dtype=np.intp)
                s_l_sub, fuse_l = enc.fuse(LOW, h[rows_idx], g_vecs[rows_idx], e_q_sub)
                u_sub, stack_cache = pol.low.stack.forward(s_l_sub)
                probs_list, pos_list = [], []
                for i, b in enumerate(multi):
                    support = cand_t[b]
                    logits_b = u_sub[i] @ pol.low.emb.value[support].T
                    probs_b = softmax(logits_b)
                    logp_b = log_softmax(logits_b)
                    if len(support) == 1:
                        pos = 0
                    elif forced is not None:
                        hits = np.nonzero(support == forced[b].questions[t])[0]
                        pos = int(hits[0])
                    elif mode == GREEDY:
                        pos = greedy_top_k(probs_b, 1)[0]
                    else:
                        pos = sample_without_replacement(probs_b, 1, rng)[0]
                    q_t[b] = support[pos]
                    logp_q_out[b, t] = float(logp_b[pos])
                    probs_list.append(probs_b)
                    pos_list.append(pos)
                    if record_distributions:
                        extra["low"][b] = PolicyDecision(
                            level="low",
                            distribution=ActionDistribution(support.copy(), probs_b.copy()),
                            chosen=(int(support[pos]),),
                            log_prob=float(logp_b[pos]),
                        )
                        extra["s_l"][b] = s_l_sub[i].copy()
                if with_tape:
                    tape.multi_rows = multi
                    tape.eq_caches = eq_caches
                    tape.low_fuse = fuse_l
                    tape.low_stack_cache = stack_cache
                    tape.low_u = u_sub
                    tape.low_probs = probs_list
                    tape.low_chosen_pos = pos_list

        for b in range(batch):
            candidates_out[b].append(cand_t[b])
        questions_out[:, t] = q_t

        if live:
            e_now = np.empty(batch)
            for b in range(batch):
                answers_out[b, t] = sessions[b].answer(int(q_t[b]))
                e_now[b] = sessions[b].mastery(targets_list[b])
            if reward_mode == "telescoping":
                rewards_out[:, t] = (e_now - e_prev) / (e_max - e_before)
            e_prev = e_now
        else:
            answers_out[:, t] = [forced[b].answers[t] for b in range(batch)]
            rewards_out[:, t] = [forced[b].rewards[t] for b in range(batch)]

        if t < steps - 1:
            state, cache = enc.history_step(state, q_t, answers_out[:, t].astype(np.float64))
            if with_tape:
                lstm_caches.append(cache)
        if with_tape:
            step_tapes.append(tape)
        if record_distributions:
            extras.append(extra)

    if live:
        e_after = e_prev.astype(np.int64) if steps else e_before.copy()
        if reward_mode == "terminal_only" and steps:
            rewards_out[:, :] = 0.0
            for b in range(batch):
                rewards_out[b, steps - 1] = learning_effect(e_after[b], e_before[b], e_max[b])
    else:
        e_after = np.array([r.e_after for r in forced], dtype=np.int64)

    records = []
    for b in range(batch):
        delta = learning_effect(int(e_after[b]), int(e_before[b]), int(e_max[b]))
        records.append(
            EpisodeRecord(
                targets=targets_list[b],
                warmup_q=warm_q[b],
                warmup_y=warm_y[b],
                concepts=None if disable_high else concepts_out[b],
                candidates=candidates_out[b],
                questions=questions_out[b],
                answers=answers_out[b],
                rewards=rewards_out[b],
                logp_c=logp_c_out[b],
                logp_q=logp_q_out[b],
                yhat=yhat_out[b],
                e_before=int(e_before[b]),
                e_max=int(e_max[b]),
                e_after=int(e_after[b]),
                delta_u=delta,
            )
        )
    batch_tape = None
    if with_tape:
        batch_tape = BatchTape(
            warmup_len=w,
            steps=steps,
            batch=batch,
            k=k,
            disable_high=disable_high,
            lstm_caches=lstm_caches,
            g_caches=g_caches,
            ec_cache=ec_cache,
            eqfull_cache=eqfull_cache,
            step_tapes=step_tapes,
        )
    return records, batch_tape, extras


def returns_matrix(records: list[EpisodeRecord], gamma: float, baseline: bool = False) -> np.ndarray:
    mat = np.stack([returns(r.rewards, gamma) for r in records])
    if baseline and mat.size:
        mat = mat - mat.mean()
    return mat


def batch_backward(model: HierModel, tape: BatchTape, records: list[EpisodeRecord],
                   r_hat: np.ndarray, alpha: float) -> None:
    """Accumulate gradients of the mean per-episode total loss into the parameters."""
    enc, pol = model.encoder, model.policy
    batch, steps, w, k = tape.batch, tape.steps, tape.warmup_len, tape.k
    scale = 1.0 / batch
    d_step_h = [np.zeros((batch, enc.config.d_h)) for _ in range(steps)]
    dg = np.zeros((batch, 2 * enc.config.d_a))
    de_c = np.zeros(2 * enc.config.d_a)
    de_qfull = np.zeros(2 * enc.config.d_a)
    answers = np.stack([r.answers for r in records]).astype(np.float64)

    for t in range(steps - 1, -1, -1):
        st = tape.step_tapes[t]
        # auxiliary proficiency head
        dlogit_aux = (alpha * scale) * (st.yhat - answers[:, t])
        d_step_h[t] += model.aux.backward(st.aux_cache, dlogit_aux[:, None])

        if not tape.disable_high:
            probs = st.probs_high
            coeff = (scale * r_hat[:, t])[:, None]
            multi_hot = np.zeros_like(probs)
            for b in range(batch):
                multi_hot[b, st.chosen_concepts[b]] = 1.0
            dlogits = coeff * (k * probs - multi_hot)
            ds_h = pol.high.logits_backward(st.high_pointer, dlogits)
            dh, dg_t, de = enc.fuse_backward(st.fuse_high, ds_h)
            d_step_h[t] += dh
            dg += dg_t
            de_c += de.sum(axis=0)

            if st.multi_rows:
                rows = np.array(st.multi_rows, dtype=np.intp)
                du = np.zeros_like(st.low_u)
                for i, b in enumerate(st.multi_rows):
                    support = records[b].candidates[t]
                    probs_b = st.low_probs[i]
                    dlog = probs_b.copy()
                    dlog[st.low_chosen_pos[i]] -= 1.0
                    dlog *= scale * r_hat[b, t]
                    np.add.at(pol.low.emb.grad, support, np.outer(dlog, st.low_u[i]))
                    du[i] = dlog @ pol.low.emb.value[support]
                ds_l = pol.low.stack.backward(st.low_stack_cache, du)
                dh_sub, dg_sub, de_sub = enc.fuse_backward(st.low_fuse, ds_l)
                d_step_h[t][rows] += dh_sub
                dg[rows] += dg_sub
                for i in range(len(st.multi_rows)):
                    enc.question_attn.backward(st.eq_caches[i], d_pooled=de_sub[i])
        else:
            probs = st.flat_probs
            coeff = (scale * r_hat[:, t])[:, None]
            one_hot = np.zeros_like(probs)
            for b in range(batch):
                one_hot[b, records[b].questions[t]] = 1.0
            dlogits = coeff * (probs - one_hot)
            ds_l = pol.low.logits_backward(st.flat_pointer, dlogits)
            dh, dg_t, de = enc.fuse_backward(st.flat_fuse, ds_l)
            d_step_h[t] += dh
            dg += dg_t
            de_qfull += de.sum(axis=0)

    # back through the history LSTM (advance a produced the state consumed at step a - w)
    dh = np.zeros((batch, enc.config.d_h))
    dc = np.zeros_like(dh)
    n_advances = len(tape.lstm_caches)
    for a in range(n_advances, 0, -1):
        t = a - w
        if 0 <= t < steps:
            dh = dh + d_step_h[t]
        dh, dc = enc.history_step_backward(tape.lstm_caches[a - 1], dh, dc)
    # the state before any record is the zero init; its gradient is discarded,
    # but a consumer at t=0 with no warmup still contributed nothing upstream.

    for b in range(batch):
        enc.question_attn.backward(tape.g_caches[b], d_pooled=dg[b])
    if tape.disable_high:
        enc.question_attn.backward(tape.eqfull_cache, d_pooled=de_qfull)
    else:
        enc.concept_attn.backward(tape.ec_cache, d_pooled=de_c)


def batch_losses(records: list[EpisodeRecord], gamma: float, alpha: float,
                 baseline: bool = False):
    """Per-episode (l_h, l_l, l_p, total) plus the batch-mean total."""
    r_hat = returns_matrix(records, gamma, baseline=False)
    base = r_hat.mean() if (baseline and r_hat.size) else 0.0
    rows = [rec.losses(gamma, alpha, baseline_mean=base) for rec in records]
    mean_total = float(np.mean([r[3] for r in rows])) if rows else 0.0
    return rows, mean_total


def replay_batch_loss(model: HierModel, cmap: CurriculumMap, records: list[EpisodeRecord],
                      gamma: float, alpha: float, k: int = 1, disable_high: bool = False,
                      baseline: bool = False) -> float:
    """Recompute the batch-mean loss for frozen episodes under current parameters."""
    steps = len(records[0].questions)
    new_records, _, _ = run_batch(
        model, cmap, steps, forced=records, k=k, disable_high=disable_high, with_tape=False
    )
    _, mean_total = batch_losses(new_records, gamma, alpha, baseline)
    return mean_total


# ---------------------------------------------------------------------------
# public single-session rollout


def rollout(model: HierModel, cmap: CurriculumMap, session, steps: int, *,
            mode: str = SAMPLE, rng: np.random.Generator | None = None, k: int = 1,
            disable_high: bool = False, reward_mode: str = "telescoping") -> Trajectory:
    """Reference single-session rollout; returns a fully populated trajectory."""
    if steps == 0:
        return Trajectory(steps=[], e_before=session.e_before,
                          e_max=len(session.targets), e_after=session.e_before, delta_u=0.0)
    records, _, extras = run_batch(
        model, cmap, steps, sessions=[session], mode=mode, k=k,
        disable_high=disable_high, reward_mode=reward_mode, rng=rng,
        record_distributions=True,
    )
    rec = records[0]
    step_records = []
    for t, extra in enumerate(extras):
        step_records.append(
            StepRecord(
                high_state=None if extra["s_h"] is None else extra["s_h"][0],
                low_state=extra["s_l"][0],
                concept_decision=extra["high"][0],
                question_decision=extra["low"][0],
                reward=float(rec.rewards[t]),
                correct=int(rec.answers[t]),
                predicted=float(rec.yhat[t]),
            )
        )
    return Trajectory(steps=step_records, e_before=rec.e_before, e_max=rec.e_max,
                      e_after=rec.e_after, delta_u=rec.delta_u)


# ---------------------------------------------------------------------------
# the optimization loop


@dataclass
class TrainResult:
    metrics: list[dict]
    checkpoint_path: Path | None
    episodes_run: int


def write_metrics_csv(path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_HEADER)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: row[key] for key in METRICS_HEADER})


def train_run(model: HierModel, scenario: Scenario, config: TrainConfig, *,
              k: int = 1, disable_high: bool = False, out_dir: Path | None = None,
              config_hash: str = "", episode_steps: int | None = None) -> TrainResult:
    """REINFORCE training: rollout batches, three losses, Adam steps."""
    steps = episode_steps or scenario.max_steps
    data_rng = substream(config.seed, "data")
    roll_rng = substream(config.seed, "rollout")
    optimizer = Adam(model.params, lr=config.learning_rate)
    metrics: list[dict] = []
    ckpt_dir = None
    if out_dir is not None:
        ckpt_dir = Path(out_dir) / "checkpoints"
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    last_good = {p.name: p.value.copy() for p in model.params}
    episode = 0
    next_checkpoint = config.checkpoint_every or math.inf

    while episode < config.episodes:
        bsz = min(config.batch_size, config.episodes - episode)
        warmup_len = int(data_rng.integers(config.warmup_min, config.warmup_max + 1))
        sessions = [scenario.sample_session(data_rng, warmup_len) for _ in range(bsz)]
        records, tape, _ = run_batch(
            model, scenario.curriculum, steps, sessions=sessions, mode=SAMPLE,
            k=k, disable_high=disable_high, reward_mode=config.reward_mode,
            rng=roll_rng, with_tape=True,
        )
        loss_rows, mean_total = batch_losses(records, config.gamma, config.alpha, config.baseline)
        if not math.isfinite(mean_total):
            path = None
            if ckpt_dir is not None:
                path = ckpt_dir / "policy_last_good.ckpt"
                for p in model.params:
                    p.value[...] = last_good[p.name]
                save_model(path, model, config_hash, episode, _rng_state(roll_rng))
            raise DivergenceDetected(
                f"non-finite loss at episode {episode}", checkpoint_path=path
            )
        r_hat = returns_matrix(records, config.gamma, config.baseline)
        zero_grads(model.params)
        batch_backward(model, tape, records, r_hat, config.alpha)
        clip_global_norm(model.params, config.grad_clip)
        optimizer.step()

        for rec, (l_h, l_l, l_p, total) in zip(records, loss_rows):
            metrics.append(
                {"episode": episode, "delta_u": rec.delta_u, "loss_h": l_h,
                 "loss_l": l_l, "loss_p": l_p, "loss_total": total}
            )
            episode += 1
        last_good = {p.name: p.value.copy() for p in model.params}
        if episode >= next_checkpoint and ckpt_dir is not None:
            save_model(ckpt_dir / f"policy_ep{episode}.ckpt", model, config_hash,
                       episode, _rng_state(roll_rng))
            next_checkpoint += config.checkpoint_every

    final_path = None
    if ckpt_dir is not None:
        final_path = ckpt_dir / "policy_final.ckpt"
        save_model(final_path, model, config_hash, episode, _rng_state(roll_rng))
    return TrainResult(metrics=metrics, checkpoint_path=final_path, episodes_run=episode)


def _rng_state(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    return {"bit_generator": state["bit_generator"], "state": repr(state["state"])}
