"""Essay scoring with score-specific word embeddings and LSTM regression."""

from .config import Config, SearchSpace, config_hash, load_config
from .corpus import (
    BOUNDARY_ID,
    BOUNDARY_TOKEN,
    Corpus,
    Essay,
    PAD_ID,
    PAD_TOKEN,
    ScoreRange,
    SplitSpec,
    UNK_ID,
    UNK_TOKEN,
    Vocabulary,
    WindowSample,
    build_vocabulary,
    corrupt_window,
    extract_windows,
    ingest_asap_tsv,
    load_corpus,
    split_corpus,
    tokenize,
)
from .errors import (
    ConfigError,
    DataError,
    EssayScoreError,
    ModelFormatError,
    NumericalError,
)
from .lstm import (
    LSTMLayer,
    RMSPropState,
    SeqHyper,
    SeqModel,
    bptt,
    forward_essay,
    load_model,
    lstm_step,
    predict,
    rmsprop_update,
    save_model,
    train_scorer,
)
from .metrics import (
    MetricsReport,
    pearson_r,
    quadratic_weighted_kappa,
    report,
    rmse,
    spearman_rho,
)
from .saliency import (
    QualityMap,
    input_gradients,
    quality_map,
    quality_map_spans,
    render_ansi,
    render_html,
)
from .sswe import (
    SSWEHyper,
    SSWEParams,
    load_embeddings,
    nearest_neighbors,
    save_embeddings,
    train_sswe,
)
from .synth import MISSPELL_PAIRS, PROFILES, generate, write_tsv

__version__ = "0.1.0"

__all__ = [
    "BOUNDARY_ID",
    "BOUNDARY_TOKEN",
    "Config",
    "ConfigError",
    "Corpus",
    "DataError",
    "Essay",
    "EssayScoreError",
    "LSTMLayer",
    "MISSPELL_PAIRS",
    "MetricsReport",
    "ModelFormatError",
    "NumericalError",
    "PAD_ID",
    "PAD_TOKEN",
    "PROFILES",
    "QualityMap",
    "RMSPropState",
    "SSWEHyper",
    "SSWEParams",
    "ScoreRange",
    "SearchSpace",
    "SeqHyper",
    "SeqModel",
    "SplitSpec",
    "UNK_ID",
    "UNK_TOKEN",
    "Vocabulary",
    "WindowSample",
    "bptt",
    "build_vocabulary",
    "config_hash",
    "corrupt_window",
    "extract_windows",
    "forward_essay",
    "generate",
    "ingest_asap_tsv",
    "input_gradients",
    "load_config",
    "load_corpus",
    "load_embeddings",
    "load_model",
    "lstm_step",
    "nearest_neighbors",
    "pearson_r",
    "predict",
    "quadratic_weighted_kappa",
    "quality_map",
    "quality_map_spans",
    "render_ansi",
    "render_html",
    "report",
    "rmse",
    "rmsprop_update",
    "save_embeddings",
    "save_model",
    "spearman_rho",
    "split_corpus",
    "tokenize",
    "train_scorer",
    "train_sswe",
    "write_tsv",
]
