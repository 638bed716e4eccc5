"""Feature competition in supervised learning and its absence in GAN training."""

__version__ = "0.1.0"
