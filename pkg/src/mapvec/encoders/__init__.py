from .checkpoint import (
    load_checkpoint,
    manifest_parameter_count,
    parameter_manifest,
    read_manifest,
    save_checkpoint,
)
from .codec import (
    CategoricalScheme,
    ContinuousScheme,
    FeatureCodec,
    encode_all_indices,
    encode_feature,
    feature_indices,
    fit_feature_codec,
)
from .gradcheck import grad_check
from .graph import GraphEncoder, graph_encode, normalized_adjacency
from .pipeline import EncoderPipeline, compose_pipeline
from .sequence import SequenceEncoder, seq_encode, slot_of_timestamp
from .token import TokenEncoder, token_encode

__all__ = [
    "CategoricalScheme",
    "ContinuousScheme",
    "EncoderPipeline",
    "FeatureCodec",
    "GraphEncoder",
    "SequenceEncoder",
    "TokenEncoder",
    "compose_pipeline",
    "encode_all_indices",
    "encode_feature",
    "feature_indices",
    "fit_feature_codec",
    "grad_check",
    "graph_encode",
    "load_checkpoint",
    "manifest_parameter_count",
    "normalized_adjacency",
    "parameter_manifest",
    "read_manifest",
    "save_checkpoint",
    "seq_encode",
    "slot_of_timestamp",
    "token_encode",
]
