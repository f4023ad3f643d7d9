"""UI utilities package for report export."""
