"""Build script for the compiled kernel extension.

The extension is optional: if Cython or a C compiler is unavailable the
package installs without it and raftsim.kernels falls back to the pure
numpy implementation.  Set RAFTSIM_NO_EXT=1 to skip the build explicitly.

    pip install -e .                       # builds raftsim._kernels_c
    python setup.py build_ext --inplace    # in-tree build for development
"""

import os

from setuptools import setup

extensions = []
if os.environ.get("RAFTSIM_NO_EXT", "0") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        extensions = cythonize(
            [
                Extension(
                    "raftsim._kernels_c",
                    ["src/raftsim/_kernels_c.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
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
        extensions = []

setup(ext_modules=extensions)
