"""Consolidated run reports (JSON, Markdown, PDF)."""
