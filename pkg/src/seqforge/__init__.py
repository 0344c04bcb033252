"""seqforge: integer-sequence records -> verified inductive-reasoning SFT data."""

__version__ = "0.1.0"
