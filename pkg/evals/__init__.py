"""Desk-scale evaluation of the identification workflow."""
