"""Online target-speaker VAD diarization on a streaming embedding buffer."""
from .detector import CosineDetector, DetectorConfig, OracleDetector, cosine_detect, oracle_detect
from .frontend import FRAME_RATE_HZ, FrontEndConfig, SpeakerProfile, gsp_per_frame, project, synthetic_embed
from .pipeline import (
    BlockConfig,
    PipelineConfig,
    Thresholds,
    binarize_for_update,
    detect_new_speaker_frames,
    frames_to_segments,
    initialize_first_block,
    process_block,
    remove_silence,
    run_session,
)
from .scoring import DerReport, RttmSegment, der, optimal_mapping, read_rttm, write_rttm
from .simulator import SimConfig, make_training_sample, overlap_ratio, simulate_session
from .tseb import Tseb, aggregate_targets

__version__ = "0.1.0"
