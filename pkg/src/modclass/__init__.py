"""Blind modulation classification for MIMO-OFDM over unknown
frequency-selective fading channels.

Inference methods: latent mixture-weight Gibbs sampling (with optional
annealing and minimum-entropy restarts), a superconstellation variant,
mean-field variational inference, and a Gibbs-to-mean-field hybrid.
"""

from .numerics import (
    NumericalError,
    RandomStream,
    DftSubmatrix,
    dft_submatrix,
    sample_dirichlet,
    sample_complex_gaussian,
    sample_inverse_gamma,
    digamma,
    shannon_entropy,
)
from .sigmodel import (
    Constellation,
    ModulationPool,
    Scenario,
    ChannelRealization,
    build_constellation,
    sigma2_from_snr,
    draw_channel,
    synthesize,
    subcarrier_loglik,
)
from .gibbs import (
    InferenceConfig,
    GibbsState,
    ChainResult,
    gibbs_init,
    sample_pA,
    sample_symbol,
    sample_channel,
    sample_sigma2,
    run_chain,
    run_with_restarts,
)
from .meanfield import (
    MeanFieldState,
    mf_init,
    mf_update_pA,
    mf_update_symbol,
    mf_update_channel,
    mf_update_sigma2,
    free_energy,
    mf_run,
    hybrid_run,
)
from .harness import (
    ConfigurationError,
    EmptyDataError,
    ExperimentConfig,
    TrialRecord,
    ConfusionMatrix,
    load_config,
    load_preset,
    preset_names,
    run_experiment,
    confusion_matrix,
    emit_outputs,
)

__version__ = "0.1.0"
