import os

from setuptools import Extension, setup

# The compiled kernel is optional: if Cython or a C compiler is missing the
# package falls back to the pure-NumPy kernels at import time.
ext_modules = []
if os.environ.get("ADLOOP_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "adloop._ckernels",
                    ["src/adloop/_ckernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
