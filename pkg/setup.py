"""Build script: compiles the optional Cython window kernel.

The package is fully functional without the extension (the NumPy window
runner is selected at import time), so any failure to build it is
non-fatal: we fall back to a pure-Python install rather than aborting.
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
                "dsmtlab._speedups",
                ["src/dsmtlab/_speedups.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    sys.stderr.write(f"dsmtlab: skipping compiled kernel ({exc}); "
                     "pure-Python backend will be used\n")

setup(ext_modules=ext_modules)
