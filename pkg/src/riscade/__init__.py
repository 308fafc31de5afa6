"""riscade: cascaded-channel estimation for RIS-aided mmWave uplinks.

Generates geometric two-hop channels, sounds them through a Kronecker-
structured measurement operator, and recovers the cascaded channel with a
trainable deep-unfolding network or with least-squares / gradient /
nuclear-norm baselines, all behind an sklearn-style fit/predict API.
"""

from .channel import (
    CascadedChannel,
    ChannelConfig,
    PathSet,
    assemble_h1,
    assemble_h2,
    cascade,
    draw_cascaded,
    draw_paths,
    steering_vector,
    unvectorize,
)
from .errors import ChecksumError, ConfigError, DivergenceError, RiscadeError
from .estimators import (
    GdConfig,
    GradientDescentEstimator,
    LeastSquaresEstimator,
    NuclearNormEstimator,
    SvtConfig,
    lambda_reference,
    ls_estimate,
    reg_gradient_descent,
    spectral_norm,
    svt_nuclear_solve,
)
from .experiments import (
    DESK_PROFILE,
    PAPER_PROFILE,
    Dataset,
    ExperimentSpec,
    Profile,
    ResultRow,
    StudyResult,
    angle_range_spec,
    evaluate,
    gen_dataset,
    mean_nmse,
    overhead_spec,
    paths_spec,
    run_angle_range_study,
    run_overhead_study,
    run_paths_study,
    run_study,
    run_train_snr_study,
    train_snr_spec,
    write_results_csv,
)
from .sounding import (
    MeasurementModel,
    Observation,
    SoundingConfig,
    build_combiner,
    build_model,
    build_phase_schedule,
    build_psi,
    lift_matrix,
    lift_vector,
    noise_variance,
    observe,
    unlift_vector,
)
from .unfolding import (
    AdamState,
    DeepUnfoldingEstimator,
    ForwardCache,
    Gradients,
    LayerParams,
    TrainSchedule,
    TrainingSet,
    UnfoldingParams,
    adam_step,
    backward,
    forward,
    init_adam,
    init_params,
    load_checkpoint,
    nmse_loss,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
