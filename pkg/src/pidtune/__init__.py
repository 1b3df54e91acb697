"""Coupled PID gain tuning with elitist BIPOP-aCMA-ES."""
