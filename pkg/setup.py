import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("LAGRANGIAN_SBL_NO_EXT", "") in ("", "0"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "lagrangian_sbl._core._ext",
                    ["src/lagrangian_sbl/_core/_ext.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
