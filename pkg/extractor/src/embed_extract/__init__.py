"""Batch image-embedding extraction into the screening pipeline's file format."""

from .encoders import (build_dino_encoder, build_inception_encoder,
                       load_encoder, resize_center_crop, to_normalized_chw)
from .extract import ExtractJob, ExtractResult, extract, list_images
from .formats import (VerifyReport, read_embedding_file, verify_file,
                      write_embedding_file)

__version__ = "0.1.0"
