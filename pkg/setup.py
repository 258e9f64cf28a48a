import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

npyrandom = os.path.join(os.path.dirname(np.__file__), "random", "lib")

extensions = [
    Extension(
        "frigibbs._core",
        ["src/frigibbs/_core.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[npyrandom],
        libraries=["npyrandom", "m"],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)
