"""Build script for the optional compiled kernel core.

The package works without the extension (a NumPy fallback is selected at
import time); the Cython module only accelerates the hot ARD-SE kernel
evaluations inside the simulation loop.
"""

from setuptools import setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        ["src/coragp/_fastkern.pyx"],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build environment dependent
    print(f"coragp: skipping compiled kernel core ({exc}); pure-Python fallback will be used")
    extensions = []

setup(ext_modules=extensions)
