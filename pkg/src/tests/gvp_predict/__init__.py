"""Tests for gvp_predict."""
