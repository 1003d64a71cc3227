import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("TWOSTAGE_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:  # fallback kernels are used at runtime
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "twostage._kernels",
                    ["src/twostage/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
