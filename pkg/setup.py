import os

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # build without the compiled kernels; numpy fallback is used
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("sde_metrology._kernels", ["src/sde_metrology/_kernels.pyx"],
                   include_dirs=[numpy.get_include()],
                   # numpy's C random distributions, for drawing inside the kernels
                   library_dirs=[os.path.join(os.path.dirname(numpy.__file__), "random", "lib")],
                   libraries=["npyrandom"])],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
