"""Orchestration of synthesis, training, dewarping and evaluation runs."""
