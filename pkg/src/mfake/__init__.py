"""Multi-factor fuzzy extractor and biometric authenticated key exchange.

A noisy biometric template and a secret exponent bind into one group-scalar
key via a triangular-lattice sketch; signed identity commitments over that
key support a four-message mutually-authenticated key exchange in which the
identity authority plays no online part.
"""

from .errors import (
    DecodeError,
    MfakeError,
    ParameterError,
    ProtocolStateError,
    StorageError,
)

__all__ = [
    "MfakeError",
    "ParameterError",
    "DecodeError",
    "ProtocolStateError",
    "StorageError",
]

__version__ = "0.1.0"
