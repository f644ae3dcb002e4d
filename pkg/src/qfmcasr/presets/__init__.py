"""Shipped experiment presets, loaded by name through ``load_config``."""
