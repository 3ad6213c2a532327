"""Global sign conventions and the manifest embedded in every output file."""

from __future__ import annotations

import platform

import numpy as np

# Sign applied to the class before shifting the fibre: the discrete action at
# class ``lam`` is built from ``K(q, p) = H(q, p - ORIENTATION * lam)``.  With
# ``-1`` chords of K leaving the zero section are chords of H leaving the
# graph of ``lam``, and the normalised critical value of ``h(p)`` is
# ``h(lam)``.  ``spectral.calibrate_orientation`` re-derives it from the
# fixture ``h(p) = p + p^2/2``.
ORIENTATION = -1

# Version tag of the default observable battery in :mod:`alphalab.measures`.
BATTERY_VERSION = "trig-moments-v1"

SCHEMA_VERSION = 1


def manifest(**extra) -> dict:
    """Conventions manifest: orientation, sign choices and software versions."""
    from . import __version__

    out = {
        "schema": SCHEMA_VERSION,
        "package_version": __version__,
        "orientation": ORIENTATION,
        "liouville_form": "p dq",
        "vector_field": "(dH/dp, -dH/dq)",
        "chord_action": "int (H - p qdot) dt",
        "battery": BATTERY_VERSION,
        "numpy": np.__version__,
        "python": platform.python_version(),
    }
    out.update(extra)
    return out
