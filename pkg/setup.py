from setuptools import setup, Extension

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; hamgeom.jets falls back to numpy
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("hamgeom._kernels", ["src/hamgeom/_kernels.pyx"],
                   extra_compile_args=["-O3"])],
        language_level=3,
    )

setup(ext_modules=ext_modules)
