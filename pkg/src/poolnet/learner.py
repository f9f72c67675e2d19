"""Conservative double-DQN training, Guider regression, and the baseline suite.

Offline training minimizes the double-DQN TD error plus a conservative term
that pushes down the best unobserved action values; the Guider regresses
instant rewards and later filters online exploration. The online loop shares
one engine across fine-tuning, from-scratch baselines and dataset harvesting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import neural
from .core import Experience
from .datasets import ReplayBuffer, TransitionDataset
from .errors import ContractError
from .matching import GuiderScorer, QNetScorer, guider_inputs
from .neural import AdamState, Mlp, adam_step, polyak_update
from .sim import (
    DecisionRecord,
    EpisodeMetrics,
    InsertionDispatcher,
    RLDispatcher,
    WorldBuilder,
    ZeroScorer,
    run_episode,
)

STREAM_NETS = 21
STREAM_SAMPLE = 22
STREAM_EDGE_EP = 23
STREAM_OFFLINE = 24
STREAM_DATASET = 25
STREAM_SHUFFLE = 26

BASELINE_MODES = (
    "pwt_online_rl",
    "pwt_greedy",
    "pwt_insertion",
    "p_online_rl",
    "npwt_online_rl",
    "pwt_rgcql",
    "hybrid_q",
    "random",
)

DATASET_RECIPES = {
    "T1": [("pwt_online_rl", 0.9), ("random", 0.1)],
    "T2": [
        ("pwt_online_rl", 0.25),
        ("p_online_rl", 0.25),
        ("pwt_greedy", 0.25),
        ("random", 0.25),
    ],
}


def child_seed(*entropy: int) -> int:
    """A derived 32-bit seed so every random stream hangs off one root."""
    return int(np.random.SeedSequence(tuple(entropy)).generate_state(1)[0])


@dataclass
class LearnerConfig:
    gamma: float = 0.99
    c_offline: float = 1.0
    c_online: float = 0.1
    alpha_c: float = 0.002
    alpha_g: float = 0.005
    rho: float = 0.005
    batch_m: int = 1024
    eps0: float = 0.1
    eps_decay: float = 0.995
    eps_floor: float = 0.005
    r_hat: float = 100.0
    q_bar: float = 1e6
    memory_capacity: int = 10_000
    learn_start: int | None = None  # default: train once the memory holds `capacity` rows
    offline_steps: int = 20_000
    guider_online: bool = True
    hidden: list[int] = field(default_factory=lambda: [128, 128, 128, 128])

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ContractError("gamma must lie in [0, 1]")
        if self.c_offline < 0 or self.c_online < 0:
            raise ContractError("conservative coefficients must be non-negative")
        if not (0.0 <= self.eps_floor <= self.eps0 <= 1.0):
            raise ContractError("need 0 <= eps_floor <= eps0 <= 1")

    @property
    def effective_learn_start(self) -> int:
        return self.memory_capacity if self.learn_start is None else self.learn_start


def make_nets(
    n_actions: int,
    hidden: list[int],
    seed: int = 0,
    dtype=np.float32,
    state_dim: int = 14,
) -> tuple[Mlp, Mlp, Mlp]:
    """Q-network, its target copy, and the Guider (state+action -> reward)."""
    qnet = Mlp.create((state_dim, *hidden, n_actions), seed=child_seed(seed, STREAM_NETS, 1), dtype=dtype)
    target = qnet.copy()
    guider = Mlp.create(
        (state_dim + 1, *hidden, 1), seed=child_seed(seed, STREAM_NETS, 2), dtype=dtype
    )
    return qnet, target, guider


def ddqn_targets(
    batch: TransitionDataset, qnet: Mlp, target_net: Mlp, gamma: float
) -> np.ndarray:
    """TD targets with action selection by the training net, evaluation by the
    target net; terminal transitions keep only the instant reward."""
    q_next = neural.forward_batch(qnet, batch.s_next).astype(np.float64)
    selected = np.argmax(q_next, axis=1)
    q_eval = neural.forward_batch(target_net, batch.s_next).astype(np.float64)
    bootstrap = q_eval[np.arange(len(batch)), selected]
    return batch.r + gamma * bootstrap * (~batch.done)


def cddqn_loss_and_grads(
    batch: TransitionDataset, qnet: Mlp, target_net: Mlp, gamma: float, c: float
) -> tuple[float, list[np.ndarray]]:
    """Mean squared TD error plus c * (mean best Q - mean taken Q).

    The conservative term's gradient flows through the max via its argmax
    (smallest index on ties).
    """
    if len(batch) == 0:
        raise ContractError("batch must be non-empty")
    targets = ddqn_targets(batch, qnet, target_net, gamma)
    cache = neural.forward_with_cache(qnet, batch.s)
    q = cache[-1].astype(np.float64)
    n = len(batch)
    rows = np.arange(n)
    taken = q[rows, batch.a]
    td_err = taken - targets
    best_actions = np.argmax(q, axis=1)
    regularizer = float(np.mean(q[rows, best_actions]) - np.mean(taken))
    loss = float(np.mean(td_err**2)) + c * regularizer

    d_out = np.zeros_like(q)
    d_out[rows, batch.a] += 2.0 * td_err / n
    d_out[rows, best_actions] += c / n
    d_out[rows, batch.a] -= c / n
    grads = neural.backward_from_output_grad(qnet, cache, d_out)
    return loss, grads


def guider_loss_and_grads(
    batch: TransitionDataset, guider: Mlp, zone_scale: float
) -> tuple[float, list[np.ndarray]]:
    """MSE between the Guider's reward estimate for (s, a) and the booked reward."""
    if len(batch) == 0:
        raise ContractError("batch must be non-empty")
    x = guider_inputs(batch.s, batch.a, zone_scale)
    if x.shape[1] != guider.in_dim:
        raise ContractError(f"guider expects {guider.in_dim} inputs, built {x.shape[1]}")
    return neural.backward_mse(guider, x, batch.r[:, None])


def epsilon_decay(eps: float, decay: float, floor: float) -> float:
    if not (0.0 <= eps <= 1.0 and 0.0 <= decay <= 1.0 and 0.0 <= floor <= 1.0):
        raise ContractError("epsilon inputs must lie in [0, 1]")
    return max(eps * decay, floor)


def overestimation_rate(log: list[DecisionRecord], gamma: float) -> float:
    """Relative gap between predicted Q and realized discounted returns over the
    executed exploitation decisions; clamped at zero, nan when none exist."""
    if not log:
        raise ContractError("empty decision log")
    by_vehicle: dict[int, list[DecisionRecord]] = {}
    for rec in log:
        by_vehicle.setdefault(rec.vehicle_id, []).append(rec)
    predicted = 0.0
    realized = 0.0
    n_exploit = 0
    for recs in by_vehicle.values():
        ret = 0.0
        returns = [0.0] * len(recs)
        for i in range(len(recs) - 1, -1, -1):
            ret = recs[i].reward + gamma * ret
            returns[i] = ret
        for rec, g in zip(recs, returns):
            if not rec.explored and math.isfinite(rec.q_value):
                predicted += rec.q_value
                realized += g
                n_exploit += 1
    if n_exploit == 0:
        return math.nan
    if abs(realized) < 1e-12:
        return 0.0
    return max((predicted - realized) / abs(realized), 0.0)


@dataclass
class TrainCurves:
    q_loss: list[float] = field(default_factory=list)
    guider_loss: list[float] = field(default_factory=list)


def train_offline(
    dataset: TransitionDataset,
    qnet: Mlp,
    target_net: Mlp,
    guider: Mlp,
    config: LearnerConfig,
    steps: int | None = None,
    seed: int = 0,
) -> TrainCurves:
    """CDDQN + Guider updates over uniform samples of a fixed transition batch."""
    if len(dataset) == 0:
        raise ContractError("offline dataset must be non-empty")
    steps = config.offline_steps if steps is None else steps
    rng = np.random.default_rng((seed, STREAM_OFFLINE))
    adam_q = AdamState.for_params(qnet.parameters(), config.alpha_c)
    adam_g = AdamState.for_params(guider.parameters(), config.alpha_g)
    zone_scale = float(qnet.out_dim)
    curves = TrainCurves()
    for _ in range(steps):
        batch = dataset.take(rng.integers(0, len(dataset), size=config.batch_m))
        loss_q, grads_q = cddqn_loss_and_grads(
            batch, qnet, target_net, config.gamma, config.c_offline
        )
        adam_step(qnet.parameters(), grads_q, adam_q)
        polyak_update(target_net, qnet, config.rho)
        loss_g, grads_g = guider_loss_and_grads(batch, guider, zone_scale)
        adam_step(guider.parameters(), grads_g, adam_g)
        curves.q_loss.append(loss_q)
        curves.guider_loss.append(loss_g)
    return curves


@dataclass
class OnlineResult:
    metrics: list[EpisodeMetrics]
    qnet: Mlp | None
    target_net: Mlp | None
    guider: Mlp | None
    transitions: list[Experience] = field(default_factory=list)
    round_logs: list[list[tuple]] = field(default_factory=list)  # per episode, when enabled


def _online_loop(
    builder: WorldBuilder,
    config: LearnerConfig,
    episodes: int,
    *,
    qnet: Mlp | None = None,
    target_net: Mlp | None = None,
    guider: Mlp | None = None,
    scorer_kind: str = "q",
    train_q: bool = True,
    train_guider: bool | None = None,
    c: float | None = None,
    use_guider_filter: bool = False,
    door_only: bool = False,
    capacity: int | None = None,
    epsilon0: float | None = None,
    freeze_epsilon: bool = False,
    preload: TransitionDataset | None = None,
    seed: int = 0,
    collect: bool = False,
    min_transitions: int | None = None,
    dtype=np.float32,
) -> OnlineResult:
    """One online phase: per episode decay epsilon, roll the world forward, and
    (optionally) update the networks every round once the memory is warm."""
    ctx = builder.match_context(door_only=door_only)
    n_actions = ctx.n_actions
    if qnet is None:
        qnet, target_net, guider = make_nets(n_actions, config.hidden, seed=seed, dtype=dtype)
    if target_net is None:
        target_net = qnet.copy()
    if guider is None:
        _, _, guider = make_nets(n_actions, config.hidden, seed=seed, dtype=dtype)
    if scorer_kind == "q":
        scorer = QNetScorer(qnet)
    elif scorer_kind == "greedy":
        scorer = GuiderScorer(guider, n_actions, float(n_actions))
    elif scorer_kind == "zero":
        scorer = ZeroScorer(n_actions)
    else:
        raise ContractError(f"unknown scorer kind {scorer_kind!r}")
    do_guider = config.guider_online if train_guider is None else train_guider
    c_value = config.c_online if c is None else c
    eps = config.eps0 if epsilon0 is None else epsilon0
    buffer = ReplayBuffer(config.memory_capacity, pinned=preload)
    adam_q = AdamState.for_params(qnet.parameters(), config.alpha_c)
    adam_g = AdamState.for_params(guider.parameters(), config.alpha_g)
    rng = np.random.default_rng((seed, STREAM_SAMPLE))
    learn_start = config.effective_learn_start
    metrics: list[EpisodeMetrics] = []
    transitions: list[Experience] = []
    round_logs: list[list[tuple]] = []

    def on_round(world, experiences) -> None:
        for x in experiences:
            buffer.push(x)
            if collect:
                transitions.append(x)
        if not (train_q or do_guider) or buffer.total_size < learn_start:
            return
        batch = buffer.sample(config.batch_m, rng)
        if train_q:
            _, grads = cddqn_loss_and_grads(batch, qnet, target_net, config.gamma, c_value)
            adam_step(qnet.parameters(), grads, adam_q)
            polyak_update(target_net, qnet, config.rho)
        if do_guider:
            _, grads_g = guider_loss_and_grads(batch, guider, float(n_actions))
            adam_step(guider.parameters(), grads_g, adam_g)

    for e in range(episodes):
        if not freeze_epsilon:
            eps = epsilon_decay(eps, config.eps_decay, config.eps_floor)
        world = builder.build(e, capacity=capacity)
        dispatcher = RLDispatcher(
            scorer,
            guider if use_guider_filter else None,
            ctx,
            eps,
            config.r_hat,
            config.q_bar,
            seed=child_seed(seed, STREAM_EDGE_EP, e),
        )
        m = run_episode(world, dispatcher, on_round=on_round)
        m.episode = e
        m.epsilon = eps
        if world.decision_log:
            m.overestimation_rate = overestimation_rate(world.decision_log, config.gamma)
        metrics.append(m)
        if world.config.log_rounds:
            round_logs.append(world.round_log)
        if min_transitions is not None and len(transitions) >= min_transitions:
            break
    return OnlineResult(metrics, qnet, target_net, guider, transitions, round_logs)


def finetune_online(
    builder: WorldBuilder,
    qnet: Mlp,
    target_net: Mlp,
    guider: Mlp | None,
    config: LearnerConfig,
    episodes: int,
    *,
    use_guider_filter: bool = True,
    c: float | None = None,
    epsilon0: float | None = None,
    learn: bool = True,
    train_guider: bool | None = None,
    preload: TransitionDataset | None = None,
    seed: int = 0,
    collect: bool = False,
) -> OnlineResult:
    """Online fine-tuning of pre-trained networks (Guider-filtered exploration by
    default; disable the filter for the plain conservative ablation)."""
    if guider is None:
        use_guider_filter = False
    return _online_loop(
        builder,
        config,
        episodes,
        qnet=qnet,
        target_net=target_net,
        guider=guider,
        scorer_kind="q",
        train_q=learn,
        train_guider=train_guider if learn else False,
        c=c,
        use_guider_filter=use_guider_filter,
        epsilon0=epsilon0,
        preload=preload,
        seed=seed,
        collect=collect,
    )


def evaluate_policy(
    builder: WorldBuilder,
    qnet: Mlp,
    config: LearnerConfig,
    episodes: int,
    *,
    door_only: bool = False,
    capacity: int | None = None,
    seed: int = 0,
) -> OnlineResult:
    """Greedy (eps = 0), no-learning rollouts of a trained policy."""
    return _online_loop(
        builder,
        config,
        episodes,
        qnet=qnet,
        train_q=False,
        train_guider=False,
        use_guider_filter=False,
        door_only=door_only,
        capacity=capacity,
        epsilon0=0.0,
        freeze_epsilon=True,
        seed=seed,
    )


def run_baseline(
    mode: str,
    builder: WorldBuilder,
    config: LearnerConfig,
    episodes: int,
    *,
    seed: int = 0,
    dataset: TransitionDataset | None = None,
    epsilon0: float | None = None,
    collect: bool = False,
    min_transitions: int | None = None,
    offline_steps: int | None = None,
    dtype=np.float32,
) -> OnlineResult:
    """Run one of the service-mode/method baselines end to end."""
    if mode not in BASELINE_MODES:
        raise ContractError(f"unknown baseline mode {mode!r}")
    scratch_eps = 1.0 if epsilon0 is None else epsilon0
    common = dict(seed=seed, collect=collect, min_transitions=min_transitions, dtype=dtype)

    if mode == "pwt_online_rl":
        return _online_loop(
            builder, config, episodes, c=0.0, epsilon0=scratch_eps, train_guider=False, **common
        )
    if mode == "p_online_rl":
        return _online_loop(
            builder,
            config,
            episodes,
            c=0.0,
            epsilon0=scratch_eps,
            door_only=True,
            train_guider=False,
            **common,
        )
    if mode == "npwt_online_rl":
        return _online_loop(
            builder,
            config,
            episodes,
            c=0.0,
            epsilon0=scratch_eps,
            capacity=1,
            train_guider=False,
            **common,
        )
    if mode == "pwt_greedy":
        return _online_loop(
            builder,
            config,
            episodes,
            scorer_kind="greedy",
            train_q=False,
            train_guider=True,
            epsilon0=scratch_eps,
            **common,
        )
    if mode == "random":
        return _online_loop(
            builder,
            config,
            episodes,
            scorer_kind="zero",
            train_q=False,
            train_guider=False,
            epsilon0=1.0,
            freeze_epsilon=True,
            **common,
        )
    if mode == "pwt_insertion":
        metrics = []
        transitions: list[Experience] = []
        round_logs: list[list[tuple]] = []
        for e in range(episodes):
            world = builder.build(e)
            m = run_episode(
                world,
                InsertionDispatcher(),
                on_round=(lambda w, exps: transitions.extend(exps)) if collect else None,
            )
            m.episode = e
            m.epsilon = 0.0
            metrics.append(m)
            if world.config.log_rounds:
                round_logs.append(world.round_log)
            if min_transitions is not None and len(transitions) >= min_transitions:
                break
        return OnlineResult(metrics, None, None, None, transitions, round_logs)
    if mode == "hybrid_q":
        if dataset is None:
            raise ContractError("hybrid_q requires an offline dataset to preload")
        return _online_loop(
            builder,
            config,
            episodes,
            c=0.0,
            epsilon0=config.eps0 if epsilon0 is None else epsilon0,
            preload=dataset,
            train_guider=False,
            **common,
        )
    # pwt_rgcql: offline training on the dataset, then guided fine-tuning
    if dataset is None:
        raise ContractError("pwt_rgcql requires an offline dataset")
    ctx = builder.match_context()
    qnet, target_net, guider = make_nets(ctx.n_actions, config.hidden, seed=seed, dtype=dtype)
    train_offline(dataset, qnet, target_net, guider, config, steps=offline_steps, seed=seed)
    return finetune_online(
        builder,
        qnet,
        target_net,
        guider,
        config,
        episodes,
        epsilon0=config.eps0 if epsilon0 is None else epsilon0,
        seed=seed,
        collect=collect,
    )


def _quotas(mixture: list[tuple[str, float]], total: int) -> list[int]:
    if abs(sum(f for _, f in mixture) - 1.0) > 1e-9:
        raise ContractError("mixture fractions must sum to 1")
    raw = [f * total for _, f in mixture]
    base = [int(math.floor(x)) for x in raw]
    rem = total - sum(base)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:rem]:
        base[i] += 1
    return base


def generate_dataset(
    mixture: list[tuple[str, float]],
    total: int,
    builder: WorldBuilder,
    config: LearnerConfig,
    seed: int = 0,
    episode_budget: int = 200,
) -> TransitionDataset:
    """Harvest transitions from the named policies until each quota is met,
    then shuffle. Capacity-1 sources are already in augmented 3-seat form."""
    quotas = _quotas(mixture, total)
    if total == 0:
        return TransitionDataset.empty()
    parts: list[TransitionDataset] = []
    for i, ((mode, _), quota) in enumerate(zip(mixture, quotas)):
        if quota == 0:
            continue
        result = run_baseline(
            mode,
            builder,
            config,
            episodes=episode_budget,
            seed=child_seed(seed, STREAM_DATASET, i),
            collect=True,
            min_transitions=quota,
        )
        if len(result.transitions) < quota:
            raise ContractError(
                f"source {mode!r} yielded {len(result.transitions)} transitions, "
                f"needed {quota} within {episode_budget} episodes"
            )
        parts.append(TransitionDataset.from_experiences(result.transitions[:quota]))
    data = parts[0]
    for extra in parts[1:]:
        data = data.concat(extra)
    return data.shuffled(child_seed(seed, STREAM_SHUFFLE))
