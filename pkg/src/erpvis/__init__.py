"""erpvis: ERP extraction and LSTM classification for visual EEG studies.

Two-stage pipeline: average repeated same-stimulus EEG trials into ERP
sequences to raise SNR, then train an LSTM encoder with a softmax head to
classify the sequences at category or exemplar granularity.
"""

from .data import (
    Dataset,
    EEGTrial,
    SynthConfig,
    bandpass_filter,
    downsample,
    generate_synthetic_dataset,
    synth_noise_sigma,
    synth_template,
)
from .erp import (
    ERPSequence,
    ERPSpace,
    TrialSubset,
    average_trials,
    build_erp_space,
    partition_trials,
    split_erp_space,
)
from .container import load_dataset, load_erp_space, save_dataset, save_erp_space
from .checkpoint import load_model, save_model
from .lstm import (
    ForwardTrace,
    Gradients,
    LSTMModel,
    backward,
    forward_batch,
    grad_check,
    init_lstm_model,
    loss,
    lstm_forward,
    softmax,
)
from .training import EvalReport, TrainConfig, evaluate, train
from .protocols import (
    ComparisonResult,
    PipelineConfig,
    ProtocolResult,
    compare_frameworks,
    run_protocol,
    train_count_for_group,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "EEGTrial", "SynthConfig", "bandpass_filter", "downsample",
    "generate_synthetic_dataset", "synth_noise_sigma", "synth_template",
    "ERPSequence", "ERPSpace", "TrialSubset", "average_trials",
    "build_erp_space", "partition_trials", "split_erp_space",
    "load_dataset", "load_erp_space", "save_dataset", "save_erp_space",
    "load_model", "save_model",
    "ForwardTrace", "Gradients", "LSTMModel", "backward", "forward_batch",
    "grad_check", "init_lstm_model", "loss", "lstm_forward", "softmax",
    "EvalReport", "TrainConfig", "evaluate", "train",
    "ComparisonResult", "PipelineConfig", "ProtocolResult",
    "compare_frameworks", "run_protocol", "train_count_for_group",
    "__version__",
]
