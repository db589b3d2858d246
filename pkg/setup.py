"""Build script for the optional compiled kernel.

The extension is marked optional: if no C compiler is available the install
still succeeds and the package falls back to the pure numpy kernels at
import time (see rankmatch._backend).
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "rankmatch._kernel",
                ["src/rankmatch/_kernel.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
