"""e-fair: double-sided aggregation of buyers and sellers for e-commerce."""

__version__ = "0.1.0"
