"""Build script: compiles the optional fast kernels when Cython is available.

The package is fully functional without the extension; ``stratrd._backend``
falls back to the pure-Python kernels at import time.
"""

import os

from setuptools import Extension, setup

_PYX = os.path.join("src", "stratrd", "_speedups.pyx")

ext_modules = []
if os.path.exists(_PYX):
    try:
        from Cython.Build import cythonize

        ext = Extension("stratrd._speedups", sources=[_PYX])
        ext.optional = True  # a failed compile must not break installation
        ext_modules = cythonize(
            [ext],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        pass

setup(ext_modules=ext_modules)
