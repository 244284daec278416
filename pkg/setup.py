from setuptools import setup
import pathlib

here = pathlib.Path(__file__).parent.resolve()
long_description = (here / "README.md").read_text(encoding="utf-8")

setup(
  name="fracmerge",
  packages=["fracmerge"],
  package_data={"fracmerge": ["py.typed"]},
  version="0.1.0",
  license="MIT",
  description="Iterative diffusion-based reassembly of fractured 3D objects",
  long_description=long_description,
  long_description_content_type="text/markdown",
  keywords=["point-cloud", "reassembly", "diffusion", "fracture"],
  python_requires=">=3.9",
  install_requires=[
    "numpy>=1.22",
    "scipy>=1.8",
    "torch>=1.13",
    "trimesh>=3.22",
    "shapely>=2.0",
    "networkx>=2.8",
    "mapbox-earcut>=1.0",
    "rtree>=1.0",
    "tqdm>=4.64",
    "scikit-learn>=1.1",
    "matplotlib>=3.5",
  ],
  extras_require={
    "test": [
      "pytest>=7.0",
    ],
  },
  entry_points={
    "console_scripts": [
      "fracmerge=fracmerge.main:main",
    ],
  },
  classifiers=[
    "Development Status :: 3 - Alpha",
    "Intended Audience :: Science/Research",
    "License :: OSI Approved :: MIT License",
    "Programming Language :: Python :: 3",
    "Programming Language :: Python :: 3.9",
    "Programming Language :: Python :: 3.10",
    "Programming Language :: Python :: 3.11",
  ],
)
