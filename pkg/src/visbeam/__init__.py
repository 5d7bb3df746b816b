"""Vision-aided mmWave beam selection and line-of-sight blockage prediction on synthetic scenes."""

__version__ = "0.1.0"
