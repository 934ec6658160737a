from .engine import NO_FUSION, FusionConfig, SttfState, StepMetrics, decode, dense_step, generate, sttf_step, temporal_cross_attention
from .fusion import TauPolicy, adapt_tau, cosine_rows, fuse_rows, policy_loss
from .mask import ActivePatchSet, ChangeMask, detect_change_mask, extract_active_patches
from .memory import SessionError, TokenBank, full_encode, fuse_tokens, selective_update
from .model import SMALL, SttfConfig, SttfConfigError, SttfModel, VocabError
