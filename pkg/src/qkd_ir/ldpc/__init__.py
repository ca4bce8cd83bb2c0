"""LDPC codes: matrices, alist I/O, PEG construction, SPA decoding and code sets."""

from .alist import AlistError, format_alist, load_alist, parse_alist, save_alist
from .decoder import DecodeResult, bsc_llr, spa_decode
from .matrix import ParityCheckMatrix, girth, has_four_cycle
from .peg import InfeasibleDistribution, degree_counts, peg_construct
