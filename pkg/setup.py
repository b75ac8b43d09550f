"""The setup file only exists to be able to build the docs on readthedocs!"""
from setuptools import find_packages, setup

with open("README.md") as stream:
    long_description = stream.read()

REQUIREMENTS = [
    "ascii-canvas>=2.0.0",
    "numpy>=1.26.2",
]

setup(
    name="asymlab",
    version="0.1.0",
    description="Asymmetric actor-critic experiments on tabular POMDPs.",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests"]),
    install_requires=REQUIREMENTS,
    entry_points={"console_scripts": ["asymlab = asymlab.cli:run"]},
    classifiers=[
        "Programming Language :: Python",
    ],
)
