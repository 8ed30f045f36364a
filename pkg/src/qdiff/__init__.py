"""Label-guided quantum diffusion models for few-shot classification."""

__version__ = "0.1.0"
