"""Control charts built from valid p-values."""
