"""Personalized split learning and the SplitFed baseline on simulated devices.

Each global round every device runs ``I`` local steps against its own
replica of the server-side model; the server then federated-averages those
replicas (weights ``D_k / D``). SplitFed additionally averages the
device-side models with uniform weights and broadcasts the result.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .bargaining import cumulative_fractions
from .data import Dataset
from .nn import (
    DEFAULT_HIDDEN_WIDTHS,
    AdamState,
    ModelParams,
    backward_device,
    backward_server,
    build_model,
    fedavg,
    fedavg_adam,
    forward_device,
    forward_server,
    predict,
    split_at,
)
from .scenario import Scenario
from .utility import communication_delay, device_compute_time, server_compute_time
from .wireless import expected_upload_times

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "TrainState",
    "TrainingRecord",
    "train_personalized",
    "train_splitfed",
    "evaluate",
    "global_loss",
    "simulate_round_time",
]


@dataclass
class TrainConfig:
    hidden_widths: tuple[int, ...] = DEFAULT_HIDDEN_WIDTHS
    n_classes: int = 10
    batch_size: int = 256
    lr: float = 0.01
    local_steps: int | None = None  # None -> scenario.server.local_steps
    average_optimizer_state: bool = True
    mc_samples: int = 20_000
    # "full": loss over every training sample after averaging; "steps": D-weighted
    # mean of the round's local mini-batch losses (free, but measured before averaging)
    loss_eval: str = "full"
    init_gain: float = float(np.sqrt(6.0))


@dataclass
class TrainState:
    device_models: list[ModelParams]
    server_models: list[ModelParams]
    device_opt: list[AdamState]
    server_opt: list[AdamState]
    samplers: list["_BatchSampler"]
    round: int = 0


@dataclass
class TrainingRecord:
    algorithm: str
    rounds: list[int] = field(default_factory=list)
    global_loss: list[float] = field(default_factory=list)
    mean_val_acc: list[float] = field(default_factory=list)
    per_device_acc: list[list[float]] = field(default_factory=list)
    sim_time_s: list[float] = field(default_factory=list)
    local_steps: list[list[int]] = field(default_factory=list)
    samples_seen: list[list[int]] = field(default_factory=list)

    def append(self, rnd, loss, mean_acc, accs, sim_time, steps, seen):
        self.rounds.append(rnd)
        self.global_loss.append(float(loss))
        self.mean_val_acc.append(float(mean_acc))
        self.per_device_acc.append([float(a) for a in accs])
        self.sim_time_s.append(float(sim_time))
        self.local_steps.append(list(steps))
        self.samples_seen.append(list(seen))

    def header(self) -> list[str]:
        n = len(self.per_device_acc[0]) if self.per_device_acc else 0
        return (["round", "global_loss", "mean_val_acc"]
                + [f"per_device_acc_{k}" for k in range(n)] + ["sim_time_s"])

    def rows(self):
        for i, r in enumerate(self.rounds):
            yield [r, self.global_loss[i], self.mean_val_acc[i], *self.per_device_acc[i],
                   self.sim_time_s[i]]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for row in self.rows():
                w.writerow([v if isinstance(v, int) else f"{v:.17g}" for v in row])


class _BatchSampler:
    """Mini-batches without replacement; reshuffled at every epoch boundary."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        if n < 1:
            raise ValueError("empty device partition")
        self.n, self.batch_size, self.rng = n, min(batch_size, n), rng
        self.order = rng.permutation(n)
        self.pos = 0

    def next(self) -> np.ndarray:
        if self.pos + self.batch_size > self.n:
            self.order = self.rng.permutation(self.n)
            self.pos = 0
        idx = self.order[self.pos:self.pos + self.batch_size]
        self.pos += self.batch_size
        return idx


def simulate_round_time(scenario: Scenario, alpha: float, expected_taus: Sequence[float],
                        tau_mode: str = "max") -> float:
    """Server compute + slowest device compute + I uplinks of the slowest link."""
    slowest = max(device_compute_time(alpha, d) for d in scenario.devices)
    return float(server_compute_time(alpha, scenario) + slowest
                 + communication_delay(expected_taus, scenario.server.local_steps, tau_mode))


def evaluate(device_models: Sequence[ModelParams], server_model: ModelParams | Sequence[ModelParams],
             datasets: Sequence[Dataset]) -> tuple[list[float], float]:
    """Per-device accuracy of (own device model + server model) and the sample-weighted mean."""
    if isinstance(server_model, ModelParams):
        server_model = [server_model] * len(device_models)
    accs, sizes = [], []
    for dev, srv, ds in zip(device_models, server_model, datasets):
        if len(ds) == 0:
            accs.append(0.0)
            sizes.append(0)
            continue
        pred = predict(dev, srv, ds.images)
        accs.append(float(np.mean(pred == ds.labels)))
        sizes.append(len(ds))
    total = sum(sizes)
    mean = sum(a * s for a, s in zip(accs, sizes)) / total if total else 0.0
    return accs, mean


def _mean_loss(dev: ModelParams, srv: ModelParams, ds: Dataset, chunk: int = 4096) -> float:
    total = 0.0
    for start in range(0, len(ds), chunk):
        x = ds.images[start:start + chunk]
        y = ds.labels[start:start + chunk]
        acts, _ = forward_device(dev, x, y)
        _, loss, _ = forward_server(srv, acts)
        total += loss * len(y)
    return total / len(ds)


def global_loss(device_models, server_models, datasets: Sequence[Dataset]) -> float:
    """(1/D) sum_k sum_l loss over every device's local samples."""
    sizes = np.array([len(ds) for ds in datasets], dtype=float)
    losses = np.array([_mean_loss(d, s, ds) for d, s, ds in zip(device_models, server_models, datasets)])
    return float(np.sum(sizes / sizes.sum() * losses))


def _init_state(train_sets, cut_index, config: TrainConfig, seed: int) -> TrainState:
    n_features = train_sets[0].n_features
    model = build_model(n_features, config.hidden_widths, config.n_classes, seed=seed,
                        init_gain=config.init_gain)
    split = split_at(model, cut_index)
    n = len(train_sets)
    streams = np.random.SeedSequence([int(seed), 0x5EED]).spawn(n)
    return TrainState(
        device_models=[split.device_part.copy() for _ in range(n)],
        server_models=[split.server_part.copy() for _ in range(n)],
        device_opt=[AdamState.zeros_like(split.device_part) for _ in range(n)],
        server_opt=[AdamState.zeros_like(split.server_part) for _ in range(n)],
        samplers=[_BatchSampler(len(ds), config.batch_size, np.random.default_rng(ss))
                  for ds, ss in zip(train_sets, streams)],
    )


def _train(algorithm: str, scenario: Scenario, train_sets: Sequence[Dataset],
           val_sets: Sequence[Dataset], cut_index: int, rounds: int, seed: int,
           config: TrainConfig | None, expected_taus: Sequence[float] | None,
           state_hook=None) -> TrainingRecord:
    config = config or TrainConfig()
    n = len(train_sets)
    if n < 1:
        raise ValueError("no devices")
    for k, ds in enumerate(train_sets):
        if len(ds) == 0:
            raise ValueError(f"device {k} has an empty partition")
    if len(val_sets) != n:
        raise ValueError("need one validation set per device")
    local_steps = config.local_steps or scenario.server.local_steps
    if config.loss_eval not in ("full", "steps"):
        raise ValueError(f"unknown loss_eval {config.loss_eval!r}")
    state = _init_state(train_sets, cut_index, config, seed)

    counts = [state.device_models[0].total_params, state.server_models[0].total_params]
    alpha = float(cumulative_fractions(state.device_models[0].layer_param_counts
                                       + state.server_models[0].layer_param_counts)[cut_index])
    if expected_taus is None:
        expected_taus = expected_upload_times(scenario, config.mc_samples, seed)
    round_time = simulate_round_time(scenario, alpha, expected_taus)
    log.info("%s: %d devices, cut C%d (%d device / %d server params), alpha=%.4f",
             algorithm, n, cut_index, counts[0], counts[1], alpha)

    sizes = [len(ds) for ds in train_sets]
    record = TrainingRecord(algorithm)
    clock = 0.0
    for t in range(rounds):
        steps = [0] * n
        seen = [0] * n
        step_loss = [0.0] * n
        for k in range(n):
            ds = train_sets[k]
            dev, srv = state.device_models[k], state.server_models[k]
            for _ in range(local_steps):
                idx = state.samplers[k].next()
                acts, dcache = forward_device(dev, ds.images[idx], ds.labels[idx])
                _, batch_loss, scache = forward_server(srv, acts)
                step_loss[k] += batch_loss
                act_grad, _ = backward_server(srv, scache, state.server_opt[k], config.lr)
                backward_device(dev, dcache, act_grad, state.device_opt[k], config.lr)
                steps[k] += 1
                seen[k] += len(idx)

        server_avg = fedavg(state.server_models, sizes)
        state.server_models = [server_avg.copy() for _ in range(n)]
        if config.average_optimizer_state:
            opt = fedavg_adam(state.server_opt, sizes)
            state.server_opt = [opt.copy() for _ in range(n)]
        if algorithm == "splitfed":
            uniform = [1.0] * n
            device_avg = fedavg(state.device_models, uniform)
            state.device_models = [device_avg.copy() for _ in range(n)]
            if config.average_optimizer_state:
                opt = fedavg_adam(state.device_opt, uniform)
                state.device_opt = [opt.copy() for _ in range(n)]
        state.round = t + 1

        clock += round_time
        accs, mean_acc = evaluate(state.device_models, state.server_models, val_sets)
        if config.loss_eval == "full":
            loss = global_loss(state.device_models, state.server_models, train_sets)
        else:
            loss = float(np.dot(np.asarray(sizes) / sum(sizes), np.asarray(step_loss) / local_steps))
        record.append(t + 1, loss, mean_acc, accs, clock, steps, seen)
        log.debug("%s round %d: loss %.4f, val acc %.4f", algorithm, t + 1, loss, mean_acc)
        if state_hook is not None:
            state_hook(state)
    return record


def train_personalized(scenario: Scenario, train_sets: Sequence[Dataset], val_sets: Sequence[Dataset],
                       cut_index: int, rounds: int = 30, seed: int = 0,
                       config: TrainConfig | None = None, expected_taus=None,
                       state_hook=None) -> TrainingRecord:
    """Device-side models stay personal; only server-side replicas are averaged."""
    return _train("personalized", scenario, train_sets, val_sets, cut_index, rounds, seed,
                  config, expected_taus, state_hook)


def train_splitfed(scenario: Scenario, train_sets: Sequence[Dataset], val_sets: Sequence[Dataset],
                   cut_index: int, rounds: int = 30, seed: int = 0,
                   config: TrainConfig | None = None, expected_taus=None,
                   state_hook=None) -> TrainingRecord:
    return _train("splitfed", scenario, train_sets, val_sets, cut_index, rounds, seed,
                  config, expected_taus, state_hook)
