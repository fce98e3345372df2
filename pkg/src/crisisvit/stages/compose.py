"""Chaining pre-training stages into one checkpoint lineage.

When the context has a run directory, every finished stage's checkpoint is
stored content-addressed and recorded in the run ledger; a later call with
the same stages picks those up instead of training again.
"""

import hashlib
import json
import time
from dataclasses import dataclass, field

from rich.console import Console

from crisisvit.backbone.checkpoint import ParameterCheckpoint
from crisisvit.errors import ConfigurationError, CrisisViTError, TrainingError
from crisisvit.services.training import TrainingOutcome
from crisisvit.stages.base import PretrainStage, StageContext

console = Console()


@dataclass
class ComposeOutcome:
    checkpoint: ParameterCheckpoint
    outcomes: list[TrainingOutcome | None] = field(default_factory=list)  # None = resumed from disk
    resumed: list[str] = field(default_factory=list)  # stage keys loaded instead of trained


def stage_key(previous: str, stage: PretrainStage, context: StageContext) -> str:
    """Key of a stage given everything upstream of it."""
    payload = json.dumps(
        {"previous": previous, "stage": stage.to_spec(), "model": context.model_config.to_dict()},
        sort_keys=True,
        default=str,
    )
    return "stage-" + hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def _check_compatible(checkpoint: ParameterCheckpoint, context: StageContext, where: str) -> None:
    if checkpoint.model_config.encoder_signature() != context.model_config.encoder_signature():
        raise ConfigurationError(
            f"{where}: checkpoint architecture {checkpoint.model_config.encoder_signature()} "
            f"does not match {context.model_config.encoder_signature()}",
            field="model",
        )


def _resume(key: str, context: StageContext) -> ParameterCheckpoint | None:
    if context.ledger is None or context.run_dir is None:
        return None
    record = context.ledger.finished(key)
    if record is None:
        return None
    path = context.run_dir / record["artifact"]
    if not path.exists():
        return None
    return ParameterCheckpoint.load(path)


def compose_stages(stages: list[PretrainStage], context: StageContext) -> ComposeOutcome:
    """Run stages in order, threading the checkpoint from one to the next.

    Provenance of the result is the concatenation of every stage's records,
    starting with whatever an external checkpoint already carried.

    Raises:
        ConfigurationError: on an empty stage list or an incompatible checkpoint
        TrainingError: when a stage fails for a reason other than bad config/data
    """
    if not stages:
        raise ConfigurationError("stage list is empty", field="stages")
    out = context.out or console
    checkpoint: ParameterCheckpoint | None = None
    outcomes: list[TrainingOutcome | None] = []
    resumed_keys: list[str] = []
    key = "root"
    for position, stage in enumerate(stages):
        key = stage_key(key, stage, context)
        where = f"stages[{position}] ({stage.to_spec().get('kind')})"
        resumed = _resume(key, context)
        if resumed is not None:
            out.print(f"[dim]  {where}: already finished, loaded {key}[/dim]")
            checkpoint = resumed
            outcomes.append(None)
            resumed_keys.append(key)
            continue

        if checkpoint is not None:
            _check_compatible(checkpoint, context, where)
        if context.ledger is not None:
            context.ledger.append("start", key=key, stage=where, spec=stage.to_spec())
        started = time.time()
        try:
            outcome = stage.run(checkpoint, context)
            _check_compatible(outcome.checkpoint, context, where)
        except Exception as e:
            if context.ledger is not None:
                context.ledger.append("stage_failed", key=key, stage=where, error=f"{type(e).__name__}: {e}")
            out.print(f"[red]✗ {where} failed: {e}[/red]")
            if isinstance(e, CrisisViTError):
                raise
            raise TrainingError(f"{where} failed: {e}") from e

        checkpoint = outcome.checkpoint
        outcomes.append(outcome)
        if context.ledger is not None:
            artifact = None
            if context.run_dir is not None:
                artifact = f"checkpoints/{checkpoint.digest}.ckpt"
                checkpoint.save(context.run_dir / artifact)
            context.ledger.append(
                "finish",
                key=key,
                stage=where,
                artifact=artifact,
                digest=checkpoint.digest,
                wall_time=time.time() - started,
                final_loss=outcome.history[-1].loss if outcome.history else None,
            )

    assert checkpoint is not None
    return ComposeOutcome(checkpoint, outcomes, resumed_keys)
