"""Build script: compiles the Cython stabilization kernel when possible.

The package works without the extension (a pure-Python kernel is selected
at import time), so a missing compiler or Cython only costs speed.
"""

import sys

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "arwsim._ckernel",
                ["src/arwsim/_ckernel.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    print("arwsim: Cython not available, building without the compiled kernel",
          file=sys.stderr)

setup(ext_modules=ext_modules)
