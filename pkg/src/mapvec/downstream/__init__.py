from .finetune import (
    STRATEGIES,
    EncodeContext,
    entity_representations,
    evaluate_task,
    export_predictions,
    finetune,
    primary_metric,
    task_loss,
    task_outputs,
)
from .sts import StsIndex, generate_detour, sts_index, sts_query
from .tasks import (
    DOWNSTREAM_TASKS,
    TASK_ENTITY,
    TASK_LABEL_FEATURE,
    TASK_METRIC_KIND,
    DownstreamTask,
    asi_speed_labels,
    build_task,
    flow_labels,
    od_pair_labels,
)

__all__ = [
    "DOWNSTREAM_TASKS",
    "DownstreamTask",
    "EncodeContext",
    "STRATEGIES",
    "StsIndex",
    "TASK_ENTITY",
    "TASK_LABEL_FEATURE",
    "TASK_METRIC_KIND",
    "asi_speed_labels",
    "build_task",
    "entity_representations",
    "evaluate_task",
    "export_predictions",
    "finetune",
    "flow_labels",
    "generate_detour",
    "od_pair_labels",
    "primary_metric",
    "sts_index",
    "sts_query",
    "task_loss",
    "task_outputs",
]
