"""Event-gated sparse token inference (STTF) and adaptive branch routing (ANC)."""

__version__ = "0.1.0"
