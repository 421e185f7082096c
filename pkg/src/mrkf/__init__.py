"""Multirate steady-state Kalman filter design via cyclic reformulation and LMIs."""
