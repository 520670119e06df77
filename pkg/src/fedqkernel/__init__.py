"""Distributed quantum kernel estimation and the models trained on it."""

from .simulator import (
    CapacityError,
    GateKind,
    GateOp,
    NoiseLevel,
    NoiseModel,
    StateVector,
    apply_gate,
    apply_pauli_noise,
    discard_measured,
    initialize_register,
    measure_qubit,
    new_state,
    overlap,
    prob_zero,
)
from .encodings import (
    EncodedPoint,
    FeatureMapKind,
    FeatureMapSpec,
    RffDraw,
    encode_copies,
    encode_linear,
    encode_point,
    encode_poly,
    encode_rff,
    obfuscation_unitary,
    sample_rff,
)
from .protocol import (
    CircuitMode,
    PartyId,
    ProtocolError,
    ProtocolTranscript,
    SessionConfig,
    estimate_overlap,
    prepare_bell_pairs,
    run_decoy_session,
    run_session,
    swap_test,
    teleport_register,
)
from .kernelml import (
    CvReport,
    GramEstimate,
    GramSource,
    KernelConvention,
    KpcaProjection,
    PipelineSpec,
    SvmModel,
    assemble_gram,
    fit_kpca,
    predict_svm,
    psd_repair,
    stratified_cv,
    train_svm,
)
from .datasets import Dataset, Preprocessor, load_csv, load_dataset, pad_features, subsample

__version__ = "0.1.0"
