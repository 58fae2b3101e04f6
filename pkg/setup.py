"""Build hook for the optional compiled kernels.

If Cython or a C compiler is missing the package still installs and the
numpy fallback is used at runtime.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("ENTRODIFF_NO_EXT", "") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "entrodiff._kernels._fvcore",
                    ["src/entrodiff/_kernels/_fvcore.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O2", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
