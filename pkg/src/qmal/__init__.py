"""qmal: density-matrix simulation of lossy linear-optical circuits with
partially distinguishable photons, in a mode-assignment-list basis."""

__version__ = "0.1.0"
