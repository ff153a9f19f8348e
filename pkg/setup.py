import os

from setuptools import setup

ext_modules = []
if os.environ.get("FOPINN_NO_EXT", "") not in ("1", "true", "yes"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass  # pure-Python install; fopinn.kernels falls back to numpy
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "fopinn._kernels",
                    ["src/fopinn/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3", "-march=native", "-fno-math-errno", "-fno-trapping-math"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
