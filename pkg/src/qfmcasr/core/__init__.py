"""Domain modules: mixing, oracle, readout synthesis, spectroscopy and sensitivity."""
