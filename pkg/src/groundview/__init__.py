"""Ground-level view synthesis conditioned on overhead imagery, and dense
land-cover features taken from the conditional GAN's discriminator.

Subpackages and modules:
    geodata     locations, grids, datasets, tiles, synthetic worlds
    embeddings  overhead patch embeddings (grayscale, HSV, CNN + PCA)
    cgan        generator, discriminator, losses, training, checkpoints
    features    headless discriminator features per location
    probes      SVM probes and the reference ground-image CNN
    interp      interpolate-then-classify baseline
    mapping     majority-vote land-cover maps and rendering
    cli         command line entry point
"""

__version__ = "0.1.0"
