"""Dynamic parameter identification toolkit for a hydraulic 6-DOF arm."""
