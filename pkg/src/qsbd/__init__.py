"""Building damage detection from SAR patches with late multimodal fusion."""

__version__ = "0.1.0"
