import os

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "hirpf.numerics._ckernels",
                ["src/hirpf/numerics/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

if os.environ.get("HIRPF_NO_EXT"):
    ext_modules = []

setup(ext_modules=ext_modules)
