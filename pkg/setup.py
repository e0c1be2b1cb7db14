from setuptools import Extension, setup
from Cython.Build import cythonize

ext_modules = [
    Extension(
        "evigrid.kernels._ray_cy",
        ["src/evigrid/kernels/_ray_cy.pyx"],
        language="c++",
        extra_compile_args=["-O3", "-std=c++17"],
    )
]

setup(ext_modules=cythonize(ext_modules, language_level="3"))
