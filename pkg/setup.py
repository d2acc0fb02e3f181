#!/usr/bin/env python3
"""
hshcluster Setup Script
Installs the package and the `hshcluster` command.
"""

from setuptools import find_packages, setup

setup(
    name="hshcluster",
    version="0.1.0",
    packages=find_packages(exclude=["tests"]),
    install_requires=[
        "numpy",
        "scipy",
        "pydantic",
        "pydantic-settings",
        "python-dotenv",
        "rich",
    ],
    entry_points={
        "console_scripts": [
            "hshcluster=app.main:main",
        ],
    },
)
