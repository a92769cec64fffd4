"""Self-supervised monocular depth from video with a low-resolution and a high-resolution network."""

__version__ = "0.1.0"
