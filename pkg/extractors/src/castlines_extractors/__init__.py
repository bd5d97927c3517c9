"""Feature-extraction adapters emitting castlines input files."""

from .extractors import (
    convert_reference,
    extract_embeddings,
    extract_overlap,
    extract_transcript,
    extract_visual,
)
from .profile import ExtractionProfile, load_profile

__version__ = "0.1.0"
