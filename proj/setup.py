from glob import glob

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

setup(
    packages=["mvcov"],
    package_dir={"mvcov": "python/mvcov"},
    ext_modules=[
        Pybind11Extension(
            "mvcov._mvcov",
            sorted(glob("src/*.cpp")) + ["python/bindings.cpp"],
            include_dirs=["include"],
            cxx_std=20,
        )
    ],
    cmdclass={"build_ext": build_ext},
)
