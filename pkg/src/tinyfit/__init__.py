"""tinyfit: personalized on-wrist activity recognition, end to end.

Training happens in the cloud, inference on the band: a small 1D CNN is
trained on pooled multi-user IMU data, personalized per user by fine-tuning
only its final layer, compressed to an int8 bundle under 15 KB, and shipped
over the air to a simulated wrist device that runs integer-only inference.
"""

__version__ = "0.1.0"
