#! /usr/bin/env python
#
# License: New 3-clause BSD

from setuptools import find_packages, setup

PACKAGE_NAME = "surfvote"
DESCRIPTION = (
    "Neural SDF surface reconstruction with multi-view weight voting and "
    "geometric refinement."
)
LONG_DESCRIPTION = """
**surfvote reconstructs a surface from posed images of an object** by training a
signed distance field and a color field with volume rendering. While training, the
rendering weights of every ray are voted into a coarse grid over the scene; every few
views the grid is turned into a snapshot of likely surface points, and the field is
pulled toward those points with a Chamfer-based geometric loss.

The package ships its own small differentiable graph engine (numpy only), synthetic
scenes with an analytic ground truth, marching cubes extraction and a visual-hull
based evaluation:

.. code-block:: console

    surfvote generate-scene sphere data/sphere
    surfvote train data/sphere runs/sphere --set loss.w_geo=0.1
    surfvote extract-mesh runs/sphere/checkpoint.npz runs/sphere/mesh.ply
    surfvote evaluate runs/sphere/mesh.ply --dataset data/sphere

**surfvote** is compatible with Python >=3.7 and is distributed under the
BSD 3-clause license.
"""
LICENSE = "new BSD"
PYTHON_REQUIRES = ">=3.7"
INSTALL_REQUIRES = [
    "joblib",
    "numpy",
    "omegaconf>=2.1",
    "Pillow",
    "PyYAML",
    "scikit-learn",
    "tqdm",
]
EXTRAS_REQUIRE = {
    "dev": ["codecov", "mypy", "pytest", "pytest-cov", "scipy"],
    "viz": ["pydot"],
}
CLASSIFIERS = [
    "Development Status :: 3 - Alpha",
    "Intended Audience :: Science/Research",
    "Intended Audience :: Developers",
    "License :: OSI Approved :: BSD License",
    "Topic :: Scientific/Engineering",
    "Topic :: Scientific/Engineering :: Image Processing",
    "Programming Language :: Python",
    "Programming Language :: Python :: 3",
    "Programming Language :: Python :: 3.7",
    "Programming Language :: Python :: 3.8",
]

# Execute _version.py to get __version__ variable in context
exec(open("surfvote/_version.py", encoding="utf-8").read())

setup(
    name=PACKAGE_NAME,
    version=__version__,
    description=DESCRIPTION,
    long_description=LONG_DESCRIPTION,
    long_description_content_type="text/x-rst",
    license=LICENSE,
    python_requires=PYTHON_REQUIRES,
    install_requires=INSTALL_REQUIRES,
    extras_require=EXTRAS_REQUIRE,
    include_package_data=True,
    package_data={"surfvote": ["scenes/*.yaml"]},
    entry_points={"console_scripts": ["surfvote=surfvote.cli:main"]},
    classifiers=CLASSIFIERS,
    packages=find_packages(exclude=["tests", "tests.*"]),
)
