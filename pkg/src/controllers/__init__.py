"""Command-line controllers, one module per command family."""
