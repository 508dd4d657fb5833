"""Builds the optional compiled kernels; everything else is in pyproject.toml.

Without Cython or a C compiler the package still installs and runs on the
pure-Python kernels.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("THRUSTMIP_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "thrustmip._kernels",
                    ["src/thrustmip/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    # no -ffast-math: results must match the Python kernels
                    extra_compile_args=["-O2"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
