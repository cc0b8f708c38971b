"""Script-to-slide grounding: map narration sentences to slide text objects."""

__version__ = "0.1.0"

from .model import (
    CorrespondenceMatrix,
    GroundingResult,
    NormalizedRect,
    Role,
    ScriptSentence,
    SentenceElement,
    SlideUnit,
    StyleInfo,
    TextObjectGroup,
    grounding_to_matrix,
    matrix_to_grounding,
)

__all__ = [
    "CorrespondenceMatrix",
    "GroundingResult",
    "NormalizedRect",
    "Role",
    "ScriptSentence",
    "SentenceElement",
    "SlideUnit",
    "StyleInfo",
    "TextObjectGroup",
    "grounding_to_matrix",
    "matrix_to_grounding",
]
