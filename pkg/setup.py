from setuptools import find_packages, setup

name = "absolute_pose_lifters"
version = "0.1.0"
description = (
    "Lifting 2D human poses to absolute 3D poses with canonical root depth"
)

with open("README.md") as f:
    long_description = f.read()

with open("requirements.txt") as f:
    install_requires = [line.strip() for line in f if line.strip()]

setup(
    name=name,
    version=version,
    description=description,
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(include=["pose_lifters", "pose_lifters.*"]),
    install_requires=install_requires,
    extras_require={"test": ["ddt", "hypothesis"]},
    entry_points={"console_scripts": ["pose-lifters=pose_lifters.cli:main"]},
    use_scm_version=False,
    include_package_data=False,
)
