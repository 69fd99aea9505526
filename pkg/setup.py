"""Build script for the compiled DSP kernels.

The package works without the extension (a pure NumPy/Python fallback is
selected at import time); building it makes rendering and dataset
generation roughly two orders of magnitude faster for the sequential
filters. See benchmarks/bench_kernels.py for the comparison.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "stepfx._kernels._core",
        ["src/stepfx/_kernels/_core.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
