"""Self-supervised image colourisation with a capsule-augmented U-shaped generator.

The pipeline: CIELab preprocessing, in-gamut colour quantization, a
capsule generator with skip connections, a patch discriminator, the
combined adversarial/quantization objective, a training loop, and PSNR
evaluation.  ``ucapsnet.cli`` exposes everything as the ``ucaps`` command.
"""

__version__ = "0.1.0"

from .gamut import GamutPalette, build_palette, decode_distribution, encode_ab
from .generator import ColourGenerator, GeneratorConfig, build_generator
from .training import TrainConfig, fit, load_manifest, make_training_pair

__all__ = [
    "GamutPalette",
    "build_palette",
    "encode_ab",
    "decode_distribution",
    "ColourGenerator",
    "GeneratorConfig",
    "build_generator",
    "TrainConfig",
    "fit",
    "load_manifest",
    "make_training_pair",
    "__version__",
]
