"""Point clouds, plane fitting and multiscale flatness statistics."""
