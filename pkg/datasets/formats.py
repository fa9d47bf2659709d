"""On-disk format constants.

ARBF binary layout (all little-endian)::

    offset  size   field
    0       4      magic b"ARBF"
    4       1      version (1)
    5       8      N, uint64
    13      8      F, uint64
    21      8*N*F  float64 values, row-major
"""
import struct

ARBF_MAGIC = b"ARBF"
ARBF_VERSION = 1
ARBF_HEADER = struct.Struct("<4sBQQ")
ARBF_DTYPE = "<f8"

MAX_NODE_INDEX = 2**62
