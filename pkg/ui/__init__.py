"""UI package: Grad-CAM overlays, retrieval grids and HTML reports (file output only)."""
