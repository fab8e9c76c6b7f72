"""
The training protocol: every epoch draws one fresh batch from the generator
and takes one heavy-ball step on the mean cross-entropy over all window
positions. Held-out evaluation uses batches from a separate seed namespace.
"""
import logging
import math
import time
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Protocol

import numpy as np

from autodiff import tensor as T
from autodiff.optim import SGDMomentum
from autodiff.tensor import Parameter, Tensor, no_grad
from common.exceptions import ConfigurationError, NumericalError
from networks.spec import ModelSpec
from streams.config import ABLATION_SUBSETS, DEFAULT_EMBED_DIM, TaskConfig
from streams.encoding import EncodedBatch, slice_windows
from streams.generator import generate_stream
from training.config import EVAL_NAMESPACE, TRAIN_NAMESPACE, TrainConfig, derive_seed
from training.report import TrainReport

logger = logging.getLogger(__name__)


class Model(Protocol):
    spec: ModelSpec

    def forward(self, batch) -> Tensor: ...

    def parameters(self) -> list[Parameter]: ...


@dataclass(frozen=True)
class Measurement:
    loss: float
    accuracy: float
    n_predictions: int


def make_batch(task: TaskConfig, seed: int, batch_size: int, n_con: int) -> EncodedBatch:
    """`batch_size` windows cut from a freshly generated stream."""
    stream_seed, window_seed = np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)
    stream = generate_stream(replace(task, seed=int(stream_seed)), batch_size * (n_con + 1))
    return slice_windows(stream, n_con, batch_size, np.random.default_rng(int(window_seed)))


def held_out_batches(task: TaskConfig, n_batches: int, seed: int, batch_size: int, n_con: int) -> list[EncodedBatch]:
    return [
        make_batch(task, derive_seed(seed, EVAL_NAMESPACE, index), batch_size, n_con)
        for index in range(n_batches)
    ]


def score_batches(model: Model, batches: Iterable[EncodedBatch], n_symbols: int) -> Measurement:
    """Mean loss and argmax accuracy over symbol targets only."""
    total_loss, correct, count = 0.0, 0, 0
    with no_grad():
        for batch in batches:
            if batch.targets.max() >= n_symbols:
                raise ConfigurationError(f"targets must be symbols below {n_symbols}")
            logits = model.forward(batch)
            if logits.shape[-1] != n_symbols:
                raise ConfigurationError(f"model predicts {logits.shape[-1]} classes, task has {n_symbols} symbols")
            size = batch.targets.size
            total_loss += T.cross_entropy_logits(logits, batch.targets).item() * size
            correct += int((logits.numpy().argmax(axis=-1) == batch.targets).sum())
            count += size
    return Measurement(total_loss / count, correct / count, count)


def measure(
    model: Model,
    task: TaskConfig,
    n_batches: int = 25,
    seed: int = 0,
    batch_size: int = 200,
    n_con: int | None = None,
) -> Measurement:
    """Held-out loss and accuracy; windows default to the model's own context length."""
    if n_con is None:
        spec = getattr(model, "spec", None)
        n_con = spec.n_con if spec is not None else TrainConfig.n_con
    batches = held_out_batches(task, n_batches, seed, batch_size, n_con)
    return score_batches(model, batches, task.n_symbols)


def evaluate(model: Model, task: TaskConfig, n_batches: int = 25, seed: int = 0, **kwargs) -> float:
    """Next-symbol accuracy on held-out windows; deterministic given seed."""
    return measure(model, task, n_batches, seed, **kwargs).accuracy


def check_dimensions(model: Model, task: TaskConfig, cfg: TrainConfig):
    spec = model.spec
    if spec.d != task.embed_dim:
        raise ConfigurationError(f"model embeds d={spec.d}, task {task.tasks} needs d={task.embed_dim}")
    if spec.n_symbols != task.n_symbols:
        raise ConfigurationError(f"model predicts {spec.n_symbols} symbols, task has {task.n_symbols}")
    if spec.n_con != cfg.n_con:
        raise ConfigurationError(f"model context {spec.n_con} != train context {cfg.n_con}")


def config_echo(model: Model, task: TaskConfig, cfg: TrainConfig) -> dict[str, str]:
    echo = {f"model.{k}": str(v) for k, v in model.spec.to_dict().items()}
    echo.update(
        {
            "task.tasks": task.tasks,
            "task.n_symbols": str(task.n_symbols),
            "task.spacing_min": str(task.spacing_min),
            "task.spacing_max": str(task.spacing_max),
        }
    )
    echo.update({f"train.{k}": str(v) for k, v in cfg.to_dict().items()})
    return echo


def train(
    model: Model,
    task: TaskConfig,
    cfg: TrainConfig,
    on_evaluation: Callable[[int, Model], None] | None = None,
) -> TrainReport:
    """
    Train `model` in place for cfg.epochs steps.

    Evaluation happens before the first step, every cfg.eval_every epochs and
    after the last one. `on_evaluation(epoch, model)` is called after each.
    """
    check_dimensions(model, task, cfg)
    label = model.spec.label
    report = TrainReport(label=label, config=config_echo(model, task, cfg))
    optimizer = SGDMomentum(model.parameters(), learning_rate=cfg.lr, momentum=cfg.momentum)
    held_out = held_out_batches(task, cfg.eval_batches, cfg.seed, cfg.batch_size, cfg.n_con)
    start = time.perf_counter()

    def evaluation_point(epoch: int):
        result = score_batches(model, held_out, task.n_symbols)
        report.record(epoch, result.loss, result.accuracy)
        logger.info(f"{label} on {task.tasks}: epoch {epoch} loss {result.loss:.4f} accuracy {result.accuracy:.4f}")
        if on_evaluation is not None:
            on_evaluation(epoch, model)

    evaluation_point(0)
    for epoch in range(1, cfg.epochs + 1):
        batch = make_batch(task, derive_seed(cfg.seed, TRAIN_NAMESPACE, epoch), cfg.batch_size, cfg.n_con)
        optimizer.zero_grad()
        loss = T.cross_entropy_logits(model.forward(batch), batch.targets)
        if not math.isfinite(loss.item()):
            logger.error(f"{label} on {task.tasks}: loss {loss.item()} at epoch {epoch}, aborting")
            raise NumericalError(epoch, loss.item())
        loss.backward()
        optimizer.step()
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            evaluation_point(epoch)

    report.wall_clock = time.perf_counter() - start
    logger.info(f"Trained {label} on {task.tasks} for {cfg.epochs} epochs in {report.wall_clock:.2f} seconds.")
    return report


@dataclass
class AblationTable:
    label: str
    reports: dict[str, TrainReport]

    @property
    def accuracies(self) -> dict[str, float]:
        return {subset: report.final.accuracy for subset, report in self.reports.items()}


def ablation_suite(
    factory: Callable[[TaskConfig], Model],
    cfg: TrainConfig,
    subsets: Iterable[str] = ABLATION_SUBSETS,
    embed_dim: int = DEFAULT_EMBED_DIM,
) -> AblationTable:
    """Train a fresh model per task subset, with N chosen so that d = N + S stays fixed."""
    reports = {}
    label = ""
    for subset in subsets:
        task = TaskConfig.for_embedding(subset, embed_dim)
        model = factory(task)
        label = model.spec.label
        reports[task.tasks] = train(model, task, cfg)
    table = AblationTable(label, reports)
    logger.info(f"Ablation for {label}: {table.accuracies}")
    return table
