from .stream import EventStream, StreamFormatError, load_stream, read_stream, save_stream, write_stream
from .synth import PRESETS, SynthConfigError, SynthSceneConfig, synth_stream
from .voxel import EventDataError, EventFrame, frames_from_stream, voxelize
