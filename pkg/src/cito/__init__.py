"""Contact-implicit trajectory optimization for planar pushing.

The planar world couples a four-link arm with a sliding box. Contact is
discovered through virtual forces whose stiffness is a decision variable.
Two solvers share one shooting transcription: trust-region sequential
convex programming (:mod:`cito.scvx`) and control-limited iLQR
(:mod:`cito.ilqr`).
"""

__version__ = "0.1.0"
