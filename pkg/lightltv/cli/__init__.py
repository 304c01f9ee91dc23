"""Command line interface for lightltv."""
