import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "kgdg._core",
                ["src/kgdg/_core.pyx"],
                include_dirs=[np.get_include()],
            )
        ],
        language_level="3",
    )
except ImportError:
    # The package falls back to the pure-numpy kernels at import time.
    ext_modules = []

setup(ext_modules=ext_modules)
