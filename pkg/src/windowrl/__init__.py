"""windowrl: TD3 with a parallel history-window encoder for POMDP control."""

from .agent import (
    ReplayBuffer,
    Td3Bundle,
    Td3Config,
    Transition,
    compute_critic_target,
    init_bundle,
    select_action,
    update_step,
)
from .encoder import (
    EncoderConfig,
    GruParams,
    HistoryWindow,
    ParallelEncoderParams,
    RawEncoderParams,
    encode_backward,
    encode_window,
    init_encoder,
    recurrent_encode,
)
from .envs import (
    ObsMask,
    ObservationAttributeSpec,
    PendulumEnv,
    PointMassEnv,
    RandomizationSchedule,
    StepResult,
    apply_mask,
    make_env,
    masked_dim,
    randomize_masses,
)
from .errors import (
    ConfigurationError,
    ContractViolationError,
    EmptyWindowError,
    RemoteCommandError,
    RemoteConnectionError,
    RemoteProtocolError,
    SpecMismatchError,
)
from .harness import (
    EvalRecord,
    MetricsSummary,
    RunConfig,
    emit_plots,
    evaluate_mass_robustness,
    evaluate_policy,
    last25_mean,
    run_training,
    summarize,
)
from .nn import (
    AdamState,
    MlpParams,
    MlpSpec,
    adam_step,
    finite_diff_gradients,
    mlp_backward,
    mlp_forward,
    mlp_init,
    polyak_update,
)
from .remote import RemoteEnv, load_segment_map, remote_env_connect

__version__ = "0.1.0"
