"""PDF rendering of run reports."""
