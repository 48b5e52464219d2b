import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "mbthp._kernels._core",
        ["src/mbthp/_kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-fcx-limited-range"],
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": 3}))
