"""Build hook for the compiled contraction kernels.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile only costs speed.  Keep this file minimal:
all metadata lives in pyproject.toml.
"""

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    extensions = cythonize(
        [
            Extension(
                "crlab._core",
                ["src/crlab/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
