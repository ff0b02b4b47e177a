from ._core import (
    Agent,
    ConfigError,
    Environment,
    FormatError,
    final_performance_score,
    learning_speed_score,
    make_environment,
    probe,
    read_metrics,
    report,
    resume,
    run,
    state_distance,
    validate_config,
)

__all__ = [
    "Agent",
    "ConfigError",
    "Environment",
    "FormatError",
    "final_performance_score",
    "learning_speed_score",
    "make_environment",
    "probe",
    "read_metrics",
    "report",
    "resume",
    "run",
    "state_distance",
    "validate_config",
]
