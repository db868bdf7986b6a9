"""Space-time mixed finite elements for null controls of the 1D heat equation."""

__version__ = "0.1.0"
