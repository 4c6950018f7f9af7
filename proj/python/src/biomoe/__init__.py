"""Python bindings for the biomoe library."""

from ._core import (
    IntegrityError,
    ModelConfig,
    ProcessingError,
    ScheduleConfig,
    ShapeError,
    UsageError,
    WeightStore,
    apply_filter,
    augment_image,
    cli,
    cosine_lr,
    count_flops,
    count_params,
    cwt_scalogram,
    decode_container,
    dropout_rate,
    encode_container,
    forward,
    fuse,
    init_random,
    load_container,
    macro_metrics,
    multitask_loss,
    recurrence_matrix,
    render,
    save_container,
    smoothing_eps,
    stft,
)

__all__ = [name for name in dir() if not name.startswith("_")]
