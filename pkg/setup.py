import os

import numpy as np
from setuptools import Extension, setup

# NASEVAL_NO_EXT=1 skips the compiled kernels; the package then runs on the numpy fallback.
ext_modules = []
if not os.environ.get("NASEVAL_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "naseval._ckernels",
                    [os.path.join("src", "naseval", "_ckernels.pyx"), os.path.join("src", "naseval", "cell.c")],
                    include_dirs=[np.get_include(), os.path.join("src", "naseval")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
