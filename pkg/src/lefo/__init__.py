"""Leader-follower next-sample prediction for bidirectional haptic streams."""

from .bound import (
    BoundCertificate,
    PowerIterConfig,
    QuadraticLoss,
    certify_bound,
    delta_theta,
    hessian_vector_product,
    max_eigenvalue,
    mlp_loss_fn,
    sweep_checkpoints,
    top_eigenvalue,
)
from .config import RunConfig, config_from_dict, load_config
from .errors import LefoError, NumericError, ValidationError
from .game import (
    AccuracyReport,
    GameConfig,
    GameReport,
    evaluate_accuracy,
    lefo_train,
    minimax_objective,
    score_accuracy,
    utility_human,
    utility_robot,
)
from .info_metrics import (
    HistogramKlConfig,
    KsgConfig,
    PairedSignalSet,
    digamma,
    histogram_kl,
    ksg_mutual_information,
)
from .predictor import (
    ArmaParams,
    MlpParams,
    SgdConfig,
    arma_predict,
    follower_init,
    leader_init,
    mlp_backward,
    mlp_forward,
    mlp_init,
    predict_next,
    sgd_step,
)
from .sim import ChannelConfig, SessionReport, emit_report, measure_inference_time, run_session, simulate_lossy_channel
from .trace_io import (
    DeadbandConfig,
    HapticSample,
    Trace,
    apply_deadband,
    generate_synthetic_trace,
    parse_trace,
    train_test_split,
    write_trace,
)

__version__ = "0.1.0"
