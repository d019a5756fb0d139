"""Build script: compiles the optional offset-schedule extension.

The package is fully functional without the extension (a NumPy
implementation is selected at import time when the compiled module is
missing), so any failure here downgrades to a warning instead of
aborting the install.
"""

import sys

from setuptools import Extension, setup


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("midisync: Cython not available, skipping compiled kernel", file=sys.stderr)
        return []
    try:
        return cythonize(
            [Extension("midisync._offsets", ["src/midisync/_offsets.pyx"])],
            language_level=3,
        )
    except Exception as exc:  # pragma: no cover - build-environment dependent
        print(f"midisync: skipping compiled kernel ({exc})", file=sys.stderr)
        return []


setup(ext_modules=extensions())
