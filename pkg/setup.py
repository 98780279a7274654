"""Build script for the optional compiled kernel core.

The package is fully functional without the extension (a numpy fallback is
selected at import time); building it just makes the hot loops faster:

    python setup.py build_ext --inplace

Set ANOSYNTH_NO_EXT=1 to skip the extension entirely.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("ANOSYNTH_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "anosynth._native",
                    ["src/anosynth/_native.pyx"],
                    # -ffp-contract=off keeps float results bit-identical to
                    # the numpy fallback (no fused multiply-add).
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "language_level": "3",
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
