"""Sketch-conditioned latent diffusion toolkit.

Submodules:

- ``diffusion``      schedules, forward/reverse steps, samplers, loss
- ``autoencoder``    pixel <-> latent image codec
- ``conditioning``   region layout, multi-region sketch coder, condition decoder
- ``unet``           conditional noise-prediction U-Net
- ``data``           dataset build: background cleanup, edge maps, region remixing
- ``checkpoint``     single-file checkpoint container
- ``training``       two-stage training orchestration
- ``evaluation``     REC / FID metrics and the abstraction-level sweep
- ``pipeline``       checkpoint -> sketch -> image synthesis
- ``cli``            command-line entry point
- ``service``        HTTP synthesis service
"""

__version__ = "0.1.0"
