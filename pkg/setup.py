import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("CYCLICDP_SKIP_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "cyclicdp.training._kernels",
                    ["src/cyclicdp/training/_kernels.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        # No Cython available: install works, the pure-Python kernels are used.
        ext_modules = []

setup(ext_modules=ext_modules)
