"""Neural fields: hash-grid encodings, codebooks, geometry/texture networks."""
from .codebook import ALLOWED_SIZES, ExpressionCodebook
from .geometry import GeometryField
from .hashgrid import HASH_PRIMES, HashGridEncoder, level_resolutions, spatial_hash
from .networks import Linear, TokenTransformer, TransformerBlock
from .template import TemplateField
from .texture import TextureField

__all__ = [
    "HashGridEncoder", "spatial_hash", "level_resolutions", "HASH_PRIMES",
    "ExpressionCodebook", "ALLOWED_SIZES", "Linear", "TransformerBlock",
    "TokenTransformer", "TemplateField", "GeometryField", "TextureField",
]
