"""Build script for the compiled convolution kernels.

Set GRIDFP_NO_EXT=1 to skip compiling the extension; the package then runs
on the pure-NumPy kernels selected automatically at import time.
"""

import os

from setuptools import Extension, setup

if os.environ.get("GRIDFP_NO_EXT"):
    ext_modules = []
else:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "gridfp.kernels._convkern",
                ["src/gridfp/kernels/_convkern.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
