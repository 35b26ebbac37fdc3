#!/usr/bin/env python

import re

from setuptools import setup


def get_version():
    with open("netflow_synth/__init__.py", "r", encoding="utf-8") as f:
        return re.search(r'^__version__ = "([^"]+)"', f.read(), re.MULTILINE).group(1)


setup(
    name="netflow-synth",
    version=get_version(),
    description="Synthetic netflow dataset generator: Kronecker structure, mixture features, learned alignment",
    license="MIT",
    packages=["netflow_synth"],
    python_requires=">=3.8",
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.8",
        "networkx>=3.0",
        "scikit-learn>=1.1",
        "pandas>=1.5",
        "PyYAML>=5.4",
        "tqdm>=4.60",
        "semantic_version>=2.8",
    ],
    entry_points={"console_scripts": ["netflow-synth=netflow_synth.cli:run"]},
)
