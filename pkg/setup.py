import os

from setuptools import setup

ext_modules = []
if not os.environ.get("RAMKIT_NO_EXTENSION"):
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("ramkit._ckernel", ["src/ramkit/_ckernel.pyx"], language="c++", extra_compile_args=["-O3"])],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
