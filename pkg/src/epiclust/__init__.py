"""Geospatial clustering of disease case records."""
