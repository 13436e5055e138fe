#!/usr/bin/env python
"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.
"""
import os

from setuptools import setup, find_packages

here = os.path.abspath(os.path.dirname(__file__))

with open(os.path.join(here, "vbitsim", "VERSION")) as version_file:
    version = version_file.readline().strip()

with open(os.path.join(here, "README.rst")) as readme_file:
    long_description = readme_file.read()

setup(
    name="vbitsim",
    version=version,
    description="Simulator of an integer vector processor with bit-serial sub-byte instructions",
    long_description=long_description,
    long_description_content_type="text/x-rst",
    license="BSD-3-Clause",
    packages=find_packages(exclude=["pytests", "pytests.*", "docs"]),
    package_data={"vbitsim": ["VERSION"]},
    python_requires=">=3.8",
    install_requires=["numpy>=1.20"],
    extras_require={
        "tests": ["pytest", "hypothesis"],
        "docs": ["Sphinx", "sphinx-rtd-theme"],
    },
    entry_points={"console_scripts": ["vbitsim = vbitsim.__main__:main"]},
    classifiers=[
        "License :: OSI Approved :: BSD License",
        "Programming Language :: Python :: 3",
        "Topic :: Scientific/Engineering",
        "Topic :: System :: Emulators",
    ],
)
