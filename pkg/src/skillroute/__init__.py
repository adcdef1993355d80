"""skillroute: task-to-skill prediction and robot fleet routing toolkit."""

from skillroute.core import (
    DOMAINS,
    SKILLS,
    ArgumentError,
    DatasetError,
    SkillrouteError,
    SkillVector,
    TaskRecord,
    ValidationError,
    dataset_stats,
    read_dataset,
    stratified_split,
    validate_task_record,
    write_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "DOMAINS",
    "SKILLS",
    "ArgumentError",
    "DatasetError",
    "SkillrouteError",
    "SkillVector",
    "TaskRecord",
    "ValidationError",
    "dataset_stats",
    "read_dataset",
    "stratified_split",
    "validate_task_record",
    "write_dataset",
    "__version__",
]
