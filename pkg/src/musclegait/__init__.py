"""Muscle-constrained multicontact gait synthesis for a planar
human-prosthesis model: Hill-type muscle-tendon units, floating-base
rigid-body dynamics, an eight-domain hybrid walking model with virtual
constraints, a direct-collocation gait optimizer, and closed-loop
verification of the synthesized periodic orbits."""

__version__ = "0.1.0"
