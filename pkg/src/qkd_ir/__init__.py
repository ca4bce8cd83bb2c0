"""Information reconciliation for QKD post-processing: Cascade, blind LDPC, and
cluster-level post-processing with a simulation harness."""

__version__ = "0.1.0"
