"""affuse-extract: adapters that turn raw media into affuse feature packs."""

from .encoders import (
    AudioEncoder,
    EncoderError,
    FaceEncoder,
    MockAsr,
    SilentAudioError,
    TextEncoder,
    get_encoder,
)
from .jobs import (
    ExtractorJob,
    JobError,
    MediaItem,
    extract_audio,
    extract_face,
    extract_text,
    run_job,
)
from .media import MediaError, read_video_frames, read_wav

__version__ = "0.1.0"
