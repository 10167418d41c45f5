"""Diagnostics - finite-difference gradient checks"""
from .gradcheck import SUITES, GradcheckReport, finite_difference, relative_error, run_gradcheck
