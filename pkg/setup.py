"""Build the optional compiled kernels.

The package works without them: ``cascade_lab.kernels`` falls back to a
numpy implementation when the extension is missing.  Set
``CASCADE_LAB_NO_EXT=1`` to skip the build entirely.
"""
import os
import sys

from setuptools import setup

ext_modules = []
if not os.environ.get("CASCADE_LAB_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        print("Cython/numpy unavailable: building pure-Python package", file=sys.stderr)
    else:
        np_root = os.path.dirname(np.__file__)
        ext = Extension(
            "cascade_lab._ckernels",
            ["src/cascade_lab/_ckernels.pyx"],
            include_dirs=[np.get_include()],
            library_dirs=[
                os.path.join(np_root, "random", "lib"),
                os.path.join(np_root, "_core", "lib"),
            ],
            libraries=["npyrandom", "npymath"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            # keep a*b + c*d unfused so the fallback reproduces the arithmetic
            extra_compile_args=["-O3", "-ffp-contract=off"],
        )
        ext_modules = cythonize(
            [ext],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
