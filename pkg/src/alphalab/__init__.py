"""Symplectically homogenized alpha-functions of Hamiltonians on cotangent bundles of tori.

Subpackages:

- :mod:`alphalab.models` -- Hamiltonians, shifted and perturbed families, flows
- :mod:`alphalab.genfun` -- discrete broken action functionals and their critical points
- :mod:`alphalab.spectral` -- selected critical values, f_k and the homogenized alpha
- :mod:`alphalab.subdiff` -- Clarke and limsup subdifferentials of sampled functions
- :mod:`alphalab.measures` -- chords, empirical measures and their statistics
- :mod:`alphalab.oracle` -- Aubry-Mather alpha for convex one-dimensional models
- :mod:`alphalab.verify` -- end-to-end numerical experiments with pass/fail reports
"""

__version__ = "0.1.0"
