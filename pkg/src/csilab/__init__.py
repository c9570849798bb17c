"""CSI feedback compression: channel synthesis, path-cut preprocessing, a
numpy autoencoder, scalar/vector quantizers, a bit-exact frame format and an
experiment harness."""

from .bitstream import RAW_SAMPLE_BITS, decode_frame, encode_frame, feedback_bit_count
from .channel import ChannelConfig, Dataset, desk_config, nmse, nmse_per_sample, synth_dataset
from .harness import PipelineConfig, desk_pipeline, identity_pipeline, run_pipeline, sweep
from .preprocess import PreprocessConfig, Preprocessor

__version__ = "0.1.0"
