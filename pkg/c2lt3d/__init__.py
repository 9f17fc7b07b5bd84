"""Interface-centric 3D structural representation: charts, seams and structural metrics."""

__version__ = "0.1.0"
