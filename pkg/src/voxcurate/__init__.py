"""voxcurate: select high-quality TTS training samples from noisy speech corpora."""

__version__ = "0.1.0"
