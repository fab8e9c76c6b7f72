import logging
from typing import Sequence

from celery import group, shared_task

from training.report import TrainReport
from training.runs import TrainingRun, execute_run

logger = logging.getLogger(__name__)


@shared_task(name="training.tasks.run_training")
def run_training(run: dict) -> dict:
    """Train one model described by a TrainingRun dict and return the report dict."""
    return execute_run(TrainingRun.from_dict(run)).to_dict()


def dispatch_runs(runs: Sequence[TrainingRun]) -> list[TrainReport]:
    """
    Fan independent trainings out over the Celery workers. With eager tasks
    (the default) they run here, one after the other.
    """
    if not runs:
        return []
    logger.info(f"Dispatching {len(runs)} training runs")
    result = group(run_training.s(run.to_dict()) for run in runs).apply_async()
    return [TrainReport.from_dict(data) for data in result.get(disable_sync_subtasks=False)]
