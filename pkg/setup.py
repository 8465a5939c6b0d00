import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # the numpy fallback in predformer._kernels_py covers this
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "predformer._ckernels",
                ["src/predformer/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-ffast-math", "-fno-finite-math-only", "-march=native"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
