"""RNS-CKKS over power-of-two cyclotomic rings with packed real slots."""

from .context import CkksContext, context_for
from .evaluator import Evaluator, poly_depth
from .params import PRESET_SPECS, CkksParams, make_params, preset, security_level
from .scheme import (
    Ciphertext,
    KeyGenerator,
    Plaintext,
    PublicKey,
    RelinKey,
    SecretKey,
    decode,
    decrypt,
    decrypt_values,
    encode,
    encrypt,
    zero_ciphertext,
)
from .serialize import ciphertext_from_bytes, ciphertext_size, ciphertext_to_bytes

__all__ = [
    "CkksContext",
    "CkksParams",
    "Ciphertext",
    "Evaluator",
    "KeyGenerator",
    "PRESET_SPECS",
    "Plaintext",
    "PublicKey",
    "RelinKey",
    "SecretKey",
    "ciphertext_from_bytes",
    "ciphertext_size",
    "ciphertext_to_bytes",
    "context_for",
    "decode",
    "decrypt",
    "decrypt_values",
    "encode",
    "encrypt",
    "make_params",
    "poly_depth",
    "preset",
    "security_level",
    "zero_ciphertext",
]
