"""Builds the optional compiled stepping kernels.

The extension is a performance add-on: if it fails to build or import,
the package falls back to the numpy kernels with identical arithmetic.
FP contraction is disabled so both backends agree bit for bit.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "chaostep._kernels",
                ["src/chaostep/_kernels.pyx"],
                extra_compile_args=["-O2", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
