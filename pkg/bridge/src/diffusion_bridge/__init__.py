"""Denoiser server for the specdiff stdio bridge protocol.

Run as `python -m diffusion_bridge --echo` for a model-free loopback, or
with `--checkpoint model.pt` to serve a TorchScript epsilon-predictor.
"""
from __future__ import annotations

__version__ = "0.1.0"
