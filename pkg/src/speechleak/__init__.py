"""speechleak: recover a client's speech features and waveform from the
gradients it shares while training a keyword-spotting CNN, then score how
much leaked."""

from .attack import AdamState, AttackConfig, AttackFailure, AttackResult, adam_update, invert_features
from .dsp import (
    CmvnStats,
    FeatureGrid,
    FeatureKind,
    FrontendConfig,
    extract_features,
    mel_spectrogram_db,
    mfcc_cmvn,
)
from .gradients import (
    GradientSet,
    InversionObjective,
    attack_objective,
    attack_objective_input_grad,
    finite_diff_grad,
    param_gradients,
    restore_label,
    tv_norm,
)
from .harness import (
    DatasetManifest,
    ExperimentConfig,
    ManifestEntry,
    build_manifest,
    run_experiment,
    simulate_client,
)
from .metrics import ReconstructionReport, cosine_similarity, mse_feature, mse_waveform, stoi
from .model import CLASS_NAMES, ModelParams, init_params
from .reconstruct import (
    GriffinLimConfig,
    StatsMode,
    db_to_power,
    griffin_lim,
    mel_to_waveform,
    mfcc_to_mel,
    mfcc_to_waveform,
    nnls_mel_to_stft,
)
from .storage import (
    load_gradients,
    load_grid,
    load_params,
    load_wav,
    save_gradients,
    save_grid,
    save_params,
    save_wav,
)

__version__ = "0.1.0"
