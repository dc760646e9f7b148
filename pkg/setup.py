import numpy as np
from setuptools import Extension, setup

# The compiled kernel core is optional: the package falls back to the pure
# NumPy implementation in sgpmpc._kernel_ref when the extension is missing.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "sgpmpc._kernel_core",
                ["src/sgpmpc/_kernel_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
