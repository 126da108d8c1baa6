"""Build script for the optional compiled chain kernel.

The package works without the extension (a pure-Python kernel is selected at
import time), so a missing compiler or Cython only costs speed.
"""
import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "blockergm._chain",
                ["src/blockergm/_chain.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-env dependent
    sys.stderr.write(f"blockergm: building without compiled kernel ({exc})\n")

setup(ext_modules=ext_modules)
